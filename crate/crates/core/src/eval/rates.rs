//! Rate statistics.

/// Percentile `q` in [0, 100] by linear interpolation between order
/// statistics: position `(n - 1) q / 100` in the sorted sample.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty(), "percentile of an empty sample");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = (v.len() - 1) as f64 * q / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// 5th-percentile user rate.
pub fn five_pct_rate(rates: &[f64]) -> f64 {
    percentile(rates, 5.0)
}

/// Mean of `log10(rate)`; rates at or below the floor count as the floor.
pub fn log_utility(rates: &[f64]) -> f64 {
    assert!(!rates.is_empty(), "utility of an empty sample");
    rates.iter().map(|&r| crate::env::utility(r)).sum::<f64>() / rates.len() as f64
}

/// Empirical CDF at `points` evenly spaced probabilities in (0, 1]:
/// `(rate, p)` pairs, non-decreasing in both coordinates.
pub fn rate_cdf(rates: &[f64], points: usize) -> Vec<(f64, f64)> {
    if rates.is_empty() {
        return Vec::new();
    }
    (1..=points)
        .map(|k| {
            let p = k as f64 / points as f64;
            (percentile(rates, 100.0 * p), p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_cases() {
        assert_eq!(five_pct_rate(&[7.0; 9]), 7.0);
        let v: Vec<f64> = (1..=100).map(|x| x as f64).collect();
        assert!((five_pct_rate(&v) - 5.95).abs() < 1e-12);
        let mut w = v.clone();
        w.reverse();
        w.swap(3, 77);
        assert_eq!(five_pct_rate(&w), five_pct_rate(&v));
    }

    #[test]
    fn utility_cases() {
        assert_eq!(log_utility(&[1e6; 4]), 6.0);
        assert_eq!(log_utility(&[1e6, 1e8]), 7.0);
        let r = [3.0e5, 7.1e6, 2.2e7];
        let s: Vec<f64> = r.iter().map(|x| x * 10.0).collect();
        assert!((log_utility(&s) - log_utility(&r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cdf_is_monotone() {
        let r: Vec<f64> = (0..500).map(|i| ((i * 7919) % 503) as f64).collect();
        let c = rate_cdf(&r, 1000);
        assert_eq!(c.len(), 1000);
        assert!(c.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
        assert_eq!(c.last().unwrap().1, 1.0);
    }
}
