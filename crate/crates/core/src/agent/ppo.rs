//! PPO with truncated backpropagation through time over stored recurrent
//! states.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mask::masked_softmax;
use super::network::{PolicyParams, StepCache, B1, B2, BA, BL, BV, W1, W2, WA, WF, WH, WV, WX};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoHyper {
    pub clip: f64,
    pub gae_lambda: f64,
    pub gamma: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// samples per gradient step (chunks are never split)
    pub minibatch_size: usize,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    /// truncation length for backprop through time
    pub seq_len: usize,
    pub normalize_advantages: bool,
}

impl Default for PpoHyper {
    fn default() -> Self {
        PpoHyper {
            clip: 0.2,
            gae_lambda: 0.95,
            gamma: 0.9,
            learning_rate: 2e-3,
            epochs: 4,
            minibatch_size: 512,
            value_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            seq_len: 16,
            normalize_advantages: true,
        }
    }
}

impl PpoHyper {
    pub fn validate(&self) -> crate::Result<()> {
        let ok = self.clip > 0.0
            && self.clip < 1.0
            && (0.0..=1.0).contains(&self.gae_lambda)
            && (0.0..=1.0).contains(&self.gamma)
            && self.learning_rate > 0.0
            && self.epochs >= 1
            && self.minibatch_size >= 1
            && self.seq_len >= 1
            && self.max_grad_norm > 0.0;
        if ok {
            Ok(())
        } else {
            Err(crate::Error::Config(format!("invalid PPO hyperparameters {self:?}")))
        }
    }
}

/// GAE over one user's sequence. `values` has one more entry than
/// `rewards`: the bootstrap value of the state after the last step (unused
/// when that step is terminal). Returns `(advantages, returns)`.
pub fn gae_advantages(rewards: &[f64], values: &[f64], dones: &[bool], gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    assert_eq!(values.len(), n + 1);
    assert_eq!(dones.len(), n);
    let mut adv = vec![0.0; n];
    let mut next = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * values[t + 1] * live - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Running mean/variance of returns; the critic predicts normalized values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNormalizer {
    pub mean: f64,
    pub var: f64,
    pub count: f64,
}

impl Default for ValueNormalizer {
    fn default() -> Self {
        ValueNormalizer {
            mean: 0.0,
            var: 1.0,
            count: 0.0,
        }
    }
}

impl ValueNormalizer {
    pub fn std(&self) -> f64 {
        self.var.sqrt().max(1e-6)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std()
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.std() + self.mean
    }

    /// Merge the moments of `xs` (parallel-variance formula).
    pub fn update(&mut self, xs: &[f64]) {
        if xs.is_empty() {
            return;
        }
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        if self.count == 0.0 {
            self.mean = m;
            self.var = v;
            self.count = n;
            return;
        }
        let tot = self.count + n;
        let d = m - self.mean;
        self.var = (self.var * self.count + v * n + d * d * self.count * n / tot) / tot;
        self.mean += d * n / tot;
        self.count = tot;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for k in 0..params.len() {
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * grad[k];
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * grad[k] * grad[k];
            params[k] -= lr * (self.m[k] / c1) / ((self.v[k] / c2).sqrt() + self.eps);
        }
    }
}

/// A run of consecutive samples of one user, replayed from the recurrent
/// state the behaviour policy had before its first step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub start: usize,
    pub len: usize,
    pub h0: Vec<f64>,
    pub c0: Vec<f64>,
}

/// Training data of one round. Sample `k` occupies row `k` of `features`
/// and `masks`; chunks index contiguous sample ranges.
#[derive(Debug, Clone, Default)]
pub struct TrainBatch {
    pub features: Vec<f64>,
    pub masks: Vec<bool>,
    pub actions: Vec<usize>,
    pub old_logp: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// `false` marks a sample whose action the environment imposed; it
    /// trains the critic only. Empty means every sample is active.
    pub active: Vec<bool>,
    pub chunks: Vec<Chunk>,
}

impl TrainBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossStats {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub samples: usize,
}

impl LossStats {
    fn add(&mut self, o: &LossStats) {
        self.loss += o.loss;
        self.policy_loss += o.policy_loss;
        self.value_loss += o.value_loss;
        self.entropy += o.entropy;
        self.approx_kl += o.approx_kl;
        self.clip_fraction += o.clip_fraction;
        self.samples += o.samples;
    }
}

/// Chunks per gradient shard. Shards are reduced in a fixed order so the
/// result does not depend on the worker count.
const SHARD_CHUNKS: usize = 32;

/// Loss and gradient over the given chunks. The loss is the sum over their
/// samples divided by `denom`:
/// `-min(rho A, clip(rho) A) + c_v (v - R)^2 - c_e H`, with `v` and `R`
/// in normalized value units.
pub fn loss_and_grad(
    params: &PolicyParams,
    batch: &TrainBatch,
    chunk_ids: &[usize],
    hyper: &PpoHyper,
    norm: &ValueNormalizer,
    denom: f64,
) -> (PolicyParams, LossStats) {
    let parts: Vec<(PolicyParams, LossStats)> = chunk_ids
        .par_chunks(SHARD_CHUNKS)
        .map(|ids| shard_grad(params, batch, ids, hyper, norm, denom))
        .collect();
    let mut grad = PolicyParams::zeros(params.shape());
    let mut stats = LossStats::default();
    for (g, st) in &parts {
        grad.add_scaled(g, 1.0);
        stats.add(st);
    }
    (grad, stats)
}

fn shard_grad(
    params: &PolicyParams,
    batch: &TrainBatch,
    ids: &[usize],
    hp: &PpoHyper,
    norm: &ValueNormalizer,
    denom: f64,
) -> (PolicyParams, LossStats) {
    let sh = params.shape();
    let (d, hd, na) = (sh.input, sh.hidden, sh.actions);
    let nb = ids.len();
    let chunks: Vec<&Chunk> = ids.iter().map(|&i| &batch.chunks[i]).collect();
    let steps = chunks.iter().map(|c| c.len).max().unwrap_or(0);

    let mut h = Array2::zeros((nb, hd));
    let mut c = Array2::zeros((nb, hd));
    for (b, ch) in chunks.iter().enumerate() {
        h.row_mut(b).assign(&ArrayView1::from(&ch.h0));
        c.row_mut(b).assign(&ArrayView1::from(&ch.c0));
    }
    let mut caches: Vec<StepCache> = Vec::with_capacity(steps);
    for t in 0..steps {
        let mut x = Array2::zeros((nb, d));
        for (b, ch) in chunks.iter().enumerate() {
            if t < ch.len {
                let k = ch.start + t;
                x.row_mut(b).assign(&ArrayView1::from(&batch.features[k * d..(k + 1) * d]));
            }
        }
        let st = params.step(x, h, c);
        h = st.h.clone();
        c = st.c.clone();
        caches.push(st);
    }

    let mut grad = PolicyParams::zeros(sh);
    let mut stats = LossStats::default();
    let mut probs = vec![0.0; na];
    let mut logp = vec![0.0; na];
    let mut dh_next = Array2::<f64>::zeros((nb, hd));
    let mut dc_next = Array2::<f64>::zeros((nb, hd));
    let (lo, hi) = (1.0 - hp.clip, 1.0 + hp.clip);
    for t in (0..steps).rev() {
        let st = &caches[t];
        let mut dlogits = Array2::<f64>::zeros((nb, na));
        let mut dv = Array2::<f64>::zeros((nb, 1));
        for (b, ch) in chunks.iter().enumerate() {
            if t >= ch.len {
                continue;
            }
            let k = ch.start + t;
            let mask = &batch.masks[k * na..(k + 1) * na];
            let ent = masked_softmax(st.logits.row(b).as_slice().expect("contiguous"), mask, &mut probs, &mut logp);
            let v = st.values[b];
            let target = norm.normalize(batch.returns[k]);
            let verr = v - target;
            stats.value_loss += verr * verr;
            stats.samples += 1;
            if batch.active.get(k).copied().unwrap_or(true) {
                let a = batch.actions[k];
                let adv = batch.advantages[k];
                let ratio = (logp[a] - batch.old_logp[k]).exp();
                let s1 = ratio * adv;
                let s2 = ratio.clamp(lo, hi) * adv;
                let clipped = s2 < s1;
                let surrogate = if clipped { s2 } else { s1 };
                let g = if clipped { 0.0 } else { ratio * adv };

                stats.policy_loss -= surrogate;
                stats.entropy += ent;
                stats.approx_kl += batch.old_logp[k] - logp[a];
                stats.clip_fraction += ((ratio - 1.0).abs() > hp.clip) as u8 as f64;

                for j in 0..na {
                    if mask[j] {
                        let ind = if j == a { 1.0 } else { 0.0 };
                        dlogits[[b, j]] =
                            (-g * (ind - probs[j]) + hp.entropy_coef * probs[j] * (logp[j] + ent)) / denom;
                    }
                }
            }
            dv[[b, 0]] = 2.0 * hp.value_coef * verr / denom;
        }

        // heads
        general_mat_mul(1.0, &st.h.t(), &dlogits, 1.0, &mut grad.view_mut(WA));
        grad.view_mut(BA).row_mut(0).scaled_add(1.0, &dlogits.sum_axis(Axis(0)));
        for (f, g) in grad.slice_mut(WF).iter_mut().enumerate() {
            *g += (&dlogits * &st.x.slice(s![.., f * na..(f + 1) * na])).sum();
        }
        general_mat_mul(1.0, &st.h.t(), &dv, 1.0, &mut grad.view_mut(WV));
        grad.view_mut(BV)[[0, 0]] += dv.sum();
        let mut dh = dlogits.dot(&params.view(WA).t());
        general_mat_mul(1.0, &dv, &params.view(WV).t(), 1.0, &mut dh);
        dh += &dh_next;

        // LSTM cell
        let gi = st.gates.slice(s![.., 0..hd]);
        let gf = st.gates.slice(s![.., hd..2 * hd]);
        let gg = st.gates.slice(s![.., 2 * hd..3 * hd]);
        let go = st.gates.slice(s![.., 3 * hd..]);
        let mut dz = Array2::<f64>::zeros((nb, 4 * hd));
        for b in 0..nb {
            for u in 0..hd {
                let (i, f, g, o) = (gi[[b, u]], gf[[b, u]], gg[[b, u]], go[[b, u]]);
                let tc = st.tanh_c[[b, u]];
                let dhb = dh[[b, u]];
                let dc = dhb * o * (1.0 - tc * tc) + dc_next[[b, u]];
                dz[[b, u]] = dc * g * i * (1.0 - i);
                dz[[b, hd + u]] = dc * st.c_prev[[b, u]] * f * (1.0 - f);
                dz[[b, 2 * hd + u]] = dc * i * (1.0 - g * g);
                dz[[b, 3 * hd + u]] = dhb * tc * o * (1.0 - o);
                dc_next[[b, u]] = dc * f;
            }
        }
        general_mat_mul(1.0, &st.e2.t(), &dz, 1.0, &mut grad.view_mut(WX));
        general_mat_mul(1.0, &st.h_prev.t(), &dz, 1.0, &mut grad.view_mut(WH));
        grad.view_mut(BL).row_mut(0).scaled_add(1.0, &dz.sum_axis(Axis(0)));
        dh_next = dz.dot(&params.view(WH).t());

        // embeddings
        let mut dp2 = dz.dot(&params.view(WX).t());
        dp2.zip_mut_with(&st.e2, |g, &e| *g *= 1.0 - e * e);
        general_mat_mul(1.0, &st.e1.t(), &dp2, 1.0, &mut grad.view_mut(W2));
        grad.view_mut(B2).row_mut(0).scaled_add(1.0, &dp2.sum_axis(Axis(0)));
        let mut dp1 = dp2.dot(&params.view(W2).t());
        dp1.zip_mut_with(&st.e1, |g, &e| *g *= 1.0 - e * e);
        general_mat_mul(1.0, &st.x.t(), &dp1, 1.0, &mut grad.view_mut(W1));
        grad.view_mut(B1).row_mut(0).scaled_add(1.0, &dp1.sum_axis(Axis(0)));
    }
    stats.loss = (stats.policy_loss + hp.value_coef * stats.value_loss - hp.entropy_coef * stats.entropy) / denom;
    (grad, stats)
}

/// Scalar loss only (forward pass), for finite-difference checks.
pub fn loss_value(
    params: &PolicyParams,
    batch: &TrainBatch,
    chunk_ids: &[usize],
    hyper: &PpoHyper,
    norm: &ValueNormalizer,
    denom: f64,
) -> f64 {
    loss_and_grad(params, batch, chunk_ids, hyper, norm, denom).1.loss
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
    pub steps: usize,
    pub rejected: usize,
}

/// Normalize advantages to zero mean and unit variance; a constant batch
/// is only centred.
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let m = adv.iter().sum::<f64>() / n;
    let sd = (adv.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt();
    for a in adv.iter_mut() {
        *a -= m;
        if sd > 1e-8 {
            *a /= sd;
        }
    }
}

/// Several epochs of clipped-surrogate minibatch steps. Steps whose
/// gradient is not finite are skipped and counted in `rejected`.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut PolicyParams,
    adam: &mut Adam,
    batch: &mut TrainBatch,
    hyper: &PpoHyper,
    norm: &ValueNormalizer,
    rng: &mut R,
) -> UpdateStats {
    let mut out = UpdateStats::default();
    if batch.is_empty() {
        return out;
    }
    if hyper.normalize_advantages {
        normalize_advantages(&mut batch.advantages);
    }
    let mut order: Vec<usize> = (0..batch.chunks.len()).collect();
    let mut acc = LossStats::default();
    let mut gn_sum = 0.0;
    for _ in 0..hyper.epochs {
        order.shuffle(rng);
        let mut start = 0;
        while start < order.len() {
            let mut end = start;
            let mut m = 0;
            while end < order.len() && (m < hyper.minibatch_size || end == start) {
                m += batch.chunks[order[end]].len;
                end += 1;
            }
            let ids = &order[start..end];
            start = end;
            let (mut g, st) = loss_and_grad(params, batch, ids, hyper, norm, m as f64);
            if !g.is_finite() || !st.loss.is_finite() {
                out.rejected += 1;
                continue;
            }
            let gn = g.norm();
            if gn > hyper.max_grad_norm {
                let scale = hyper.max_grad_norm / gn;
                for x in g.data_mut() {
                    *x *= scale;
                }
            }
            adam.step(params.data_mut(), g.data(), hyper.learning_rate);
            acc.add(&st);
            gn_sum += gn;
            out.steps += 1;
        }
    }
    let n = acc.samples.max(1) as f64;
    out.policy_loss = acc.policy_loss / n;
    out.value_loss = acc.value_loss / n;
    out.entropy = acc.entropy / n;
    out.approx_kl = acc.approx_kl / n;
    out.clip_fraction = acc.clip_fraction / n;
    out.grad_norm = gn_sum / out.steps.max(1) as f64;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::network::NetShape;
    use crate::rng::SimRng;
    use rand::SeedableRng;

    #[test]
    fn gae_special_cases() {
        let r = [1.0, 2.0, -1.0, 0.5];
        let v = [0.3, -0.2, 0.8, 0.1, 0.7];
        let d = [false, false, true, false];
        let (a, ret) = gae_advantages(&r, &v, &d, 0.9, 0.0);
        for t in 0..4 {
            let live = if d[t] { 0.0 } else { 1.0 };
            assert_eq!(a[t], r[t] + 0.9 * v[t + 1] * live - v[t]);
            assert_eq!(ret[t], a[t] + v[t]);
        }
        let (a, _) = gae_advantages(&r, &v, &d, 0.0, 0.95);
        for t in 0..4 {
            assert_eq!(a[t], r[t] - v[t]);
        }
    }

    #[test]
    fn gae_matches_direct_sum() {
        let mut rng = SimRng::seed_from_u64(1);
        for _ in 0..50 {
            let n = 20;
            let r: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let v: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let d: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < 0.15).collect();
            let (g, l) = (0.9, 0.95);
            let (a, _) = gae_advantages(&r, &v, &d, g, l);
            for t in 0..n {
                let mut sum = 0.0;
                let mut w = 1.0;
                for k in t..n {
                    let live = if d[k] { 0.0 } else { 1.0 };
                    sum += w * (r[k] + g * v[k + 1] * live - v[k]);
                    if d[k] {
                        break;
                    }
                    w *= g * l;
                }
                assert!((a[t] - sum).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn normalizer_merges_moments() {
        let mut rng = SimRng::seed_from_u64(2);
        let xs: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..50.0)).collect();
        let mut n = ValueNormalizer::default();
        for c in xs.chunks(77) {
            n.update(c);
        }
        let m = xs.iter().sum::<f64>() / 1000.0;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 1000.0;
        assert!((n.mean - m).abs() < 1e-9 && (n.var - v).abs() < 1e-8);
        assert!((n.denormalize(n.normalize(7.0)) - 7.0).abs() < 1e-12);
    }

    fn toy_batch(rng: &mut SimRng, sh: NetShape, n_chunks: usize, len: usize) -> TrainBatch {
        let mut b = TrainBatch::default();
        for ci in 0..n_chunks {
            b.chunks.push(Chunk {
                start: ci * len,
                len,
                h0: (0..sh.hidden).map(|_| rng.random_range(-0.5..0.5)).collect(),
                c0: (0..sh.hidden).map(|_| rng.random_range(-0.5..0.5)).collect(),
            });
            for _ in 0..len {
                b.features.extend((0..sh.input).map(|_| rng.random_range(-1.0..1.0)));
                let mut m = vec![true; sh.actions];
                m[rng.random_range(0..sh.actions)] = false;
                let a = loop {
                    let a = rng.random_range(0..sh.actions);
                    if m[a] {
                        break a;
                    }
                };
                b.masks.extend(m);
                b.actions.push(a);
                b.advantages.push(rng.random_range(-1.0..1.0));
                b.returns.push(rng.random_range(-2.0..2.0));
                b.old_logp.push(0.0);
            }
        }
        b
    }

    #[test]
    fn zero_advantage_leaves_actor_untouched() {
        let sh = NetShape::for_base_stations(4, 8);
        let mut rng = SimRng::seed_from_u64(3);
        let p = PolicyParams::init(sh, &mut rng);
        let mut b = toy_batch(&mut rng, sh, 4, 5);
        b.advantages.fill(0.0);
        let hp = PpoHyper {
            entropy_coef: 0.0,
            ..Default::default()
        };
        let ids: Vec<usize> = (0..4).collect();
        let (g, _) = loss_and_grad(&p, &b, &ids, &hp, &ValueNormalizer::default(), 20.0);
        assert!(g.slice(WA).iter().all(|&x| x == 0.0));
        assert!(g.slice(BA).iter().all(|&x| x == 0.0));
        assert!(g.slice(WF).iter().all(|&x| x == 0.0));
        assert!(g.slice(WV).iter().any(|&x| x != 0.0));
    }

    #[test]
    fn inactive_samples_train_the_critic_only() {
        let sh = NetShape::for_base_stations(4, 8);
        let mut rng = SimRng::seed_from_u64(6);
        let p = PolicyParams::init(sh, &mut rng);
        let mut b = toy_batch(&mut rng, sh, 3, 4);
        b.active = vec![false; b.len()];
        let ids: Vec<usize> = (0..3).collect();
        let (g, st) = loss_and_grad(&p, &b, &ids, &PpoHyper::default(), &ValueNormalizer::default(), 12.0);
        assert!(g.slice(WA).iter().all(|&x| x == 0.0));
        assert!(g.slice(BA).iter().all(|&x| x == 0.0));
        assert!(g.slice(WF).iter().all(|&x| x == 0.0));
        assert!(g.slice(WV).iter().any(|&x| x != 0.0));
        assert_eq!(st.policy_loss, 0.0);
        assert_eq!(st.entropy, 0.0);
    }

    #[test]
    fn identical_policy_gives_mean_advantage() {
        let sh = NetShape::for_base_stations(4, 8);
        let mut rng = SimRng::seed_from_u64(4);
        let p = PolicyParams::init(sh, &mut rng);
        let mut b = toy_batch(&mut rng, sh, 3, 4);
        // old log-probs from the same parameters: rho = 1
        let ids: Vec<usize> = (0..3).collect();
        for ch in b.chunks.clone() {
            let mut h = Array2::from_shape_vec((1, 8), ch.h0.clone()).unwrap();
            let mut c = Array2::from_shape_vec((1, 8), ch.c0.clone()).unwrap();
            for t in 0..ch.len {
                let k = ch.start + t;
                let x = Array2::from_shape_vec((1, sh.input), b.features[k * sh.input..(k + 1) * sh.input].to_vec()).unwrap();
                let st = p.step(x, h, c);
                let mut pr = vec![0.0; 4];
                let mut lp = vec![0.0; 4];
                masked_softmax(st.logits.row(0).as_slice().unwrap(), &b.masks[k * 4..k * 4 + 4], &mut pr, &mut lp);
                b.old_logp[k] = lp[b.actions[k]];
                h = st.h;
                c = st.c;
            }
        }
        let hp = PpoHyper::default();
        let (_, st) = loss_and_grad(&p, &b, &ids, &hp, &ValueNormalizer::default(), 12.0);
        let mean_adv = b.advantages.iter().sum::<f64>();
        assert!((-st.policy_loss - mean_adv).abs() < 1e-12);
        assert!(st.approx_kl.abs() < 1e-12);
        assert_eq!(st.clip_fraction, 0.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let sh = NetShape::for_base_stations(4, 8);
        let mut rng = SimRng::seed_from_u64(5);
        let p = PolicyParams::init(sh, &mut rng);
        let b = toy_batch(&mut rng, sh, 4, 8);
        let mut b = b;
        // behaviour log-probs near the current ones keep rho off the clip edges
        let hp = PpoHyper::default();
        let ids: Vec<usize> = (0..4).collect();
        let norm = ValueNormalizer::default();
        for k in 0..b.len() {
            b.old_logp[k] = (1.0 / 3.0f64).ln() + rng.random_range(-0.05..0.05);
        }
        b.active = (0..b.len()).map(|k| k % 5 != 2).collect();
        let (g, _) = loss_and_grad(&p, &b, &ids, &hp, &norm, 32.0);
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        let mut q = p.clone();
        for i in (0..p.len()).step_by(7) {
            let orig = q.data()[i];
            q.data_mut()[i] = orig + h;
            let lp = loss_value(&q, &b, &ids, &hp, &norm, 32.0);
            q.data_mut()[i] = orig - h;
            let lm = loss_value(&q, &b, &ids, &hp, &norm, 32.0);
            q.data_mut()[i] = orig;
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - g.data()[i]).abs() / fd.abs().max(g.data()[i].abs()).max(1e-6);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "{worst}");
    }
}
