//! Per-slot link arithmetic: SINR, rates, handover interruption, reward.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scenario::HandoverModel;

/// Rates are floored at this value (bit/s) before taking logarithms.
pub const RATE_FLOOR: f64 = 1.0;

/// SINR to every BS from received powers `rx[j] = P_j g_ij` (mW).
///
/// Interference for BS j sums the other BSs on j's band only.
pub fn sinr_from_received(rx: &[f64], band_of: &[usize], noise: &[f64]) -> Vec<f64> {
    debug_assert!(rx.len() == band_of.len() && rx.len() == noise.len());
    let n = rx.len();
    (0..n)
        .map(|j| {
            let mut interference = 0.0;
            for k in 0..n {
                if k != j && band_of[k] == band_of[j] {
                    interference += rx[k];
                }
            }
            rx[j] / (interference + noise[j])
        })
        .collect()
}

/// `W log2(1 + sinr)`, bit/s.
pub fn achievable_rate(sinr: f64, bandwidth: f64) -> f64 {
    bandwidth * (1.0 + sinr).log2()
}

/// Interruption time of a slot, seconds. No draw is made when the
/// association is unchanged or when the user has no previous association.
pub fn sample_handover<R: Rng + ?Sized>(prev: Option<usize>, new: usize, model: &HandoverModel, rng: &mut R) -> f64 {
    match prev {
        Some(p) if p != new => {
            if rng.random::<f64>() < model.success_probability {
                model.success_interruption
            } else {
                model.failure_interruption
            }
        }
        _ => 0.0,
    }
}

/// `(c / load) (1 - t_ho / t_s)`, bit/s.
pub fn service_rate(c: f64, load: u32, t_ho: f64, t_s: f64) -> Result<f64> {
    if load == 0 {
        return Err(Error::Contract("served user on a BS with zero load".into()));
    }
    Ok(c / load as f64 * (1.0 - t_ho / t_s))
}

/// `log10(max(rate, RATE_FLOOR))`
pub fn utility(rate: f64) -> f64 {
    rate.max(RATE_FLOOR).log10()
}

/// `alpha u_own + (1 - alpha) / n_bs * sum(u)`
pub fn reward(own_utility: f64, all_utilities: &[f64], alpha: f64, n_bs: usize) -> f64 {
    let total: f64 = all_utilities.iter().sum();
    alpha * own_utility + (1.0 - alpha) / n_bs as f64 * total
}

/// Outcome of one slot for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotOutcome {
    pub loads: Vec<u32>,
    pub rates: Vec<f64>,
    pub utilities: Vec<f64>,
    pub rewards: Vec<f64>,
}

/// Evaluate one slot given per-user SINR vectors, chosen BSs and sampled
/// interruption times.
pub fn evaluate_slot(
    sinr: &[Vec<f64>],
    actions: &[usize],
    t_ho: &[f64],
    bandwidth: &[f64],
    t_s: f64,
    alpha: f64,
) -> Result<SlotOutcome> {
    let n_bs = bandwidth.len();
    let mut loads = vec![0u32; n_bs];
    for &a in actions {
        loads[a] += 1;
    }
    let mut rates = Vec::with_capacity(actions.len());
    for (i, &a) in actions.iter().enumerate() {
        let c = achievable_rate(sinr[i][a], bandwidth[a]);
        rates.push(service_rate(c, loads[a], t_ho[i], t_s)?);
    }
    let utilities: Vec<f64> = rates.iter().map(|&r| utility(r)).collect();
    let rewards = utilities.iter().map(|&u| reward(u, &utilities, alpha, n_bs)).collect();
    Ok(SlotOutcome {
        loads,
        rates,
        utilities,
        rewards,
    })
}
