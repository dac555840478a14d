//! Top-N action masking and the masked softmax.

/// True at the `n` largest SINR entries, ties to the lower index.
pub fn top_n_mask(sinr: &[f64], n: usize) -> Vec<bool> {
    let n = n.min(sinr.len());
    let mut idx: Vec<usize> = (0..sinr.len()).collect();
    // descending by value, ascending by index; NaN sorts last
    idx.sort_by(|&a, &b| {
        let (x, y) = (sinr[a], sinr[b]);
        y.partial_cmp(&x)
            .unwrap_or_else(|| x.is_nan().cmp(&y.is_nan()))
            .then(a.cmp(&b))
    });
    let mut mask = vec![false; sinr.len()];
    for &j in &idx[..n] {
        mask[j] = true;
    }
    mask
}

/// Softmax over the unmasked entries; masked entries get probability
/// exactly 0 and log-probability -inf. Writes into `probs`/`logp` and
/// returns the entropy.
pub fn masked_softmax(logits: &[f64], mask: &[bool], probs: &mut [f64], logp: &mut [f64]) -> f64 {
    let mut m = f64::NEG_INFINITY;
    for (l, &ok) in logits.iter().zip(mask) {
        if ok && *l > m {
            m = *l;
        }
    }
    let mut z = 0.0;
    for (l, &ok) in logits.iter().zip(mask) {
        if ok {
            z += (l - m).exp();
        }
    }
    let lz = m + z.ln();
    let mut h = 0.0;
    for j in 0..logits.len() {
        if mask[j] {
            logp[j] = logits[j] - lz;
            probs[j] = logp[j].exp();
            h -= probs[j] * logp[j];
        } else {
            logp[j] = f64::NEG_INFINITY;
            probs[j] = 0.0;
        }
    }
    h
}
