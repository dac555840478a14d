//! Evaluation: association policies, rate statistics and trajectory metrics.

pub mod rates;
pub mod trajectory;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::agent::{greedy_index, masks_for, Memory, PolicyParams};
use crate::env::{argmax, NetEnv, StepResult};
use crate::error::Result;
use crate::rng::SimRng;

pub use rates::{five_pct_rate, log_utility, percentile, rate_cdf};
pub use trajectory::{
    cosine_similarity, dtw, edr, heatmap, min_match_score, sliced_wasserstein, sliced_wasserstein_points, wasserstein_1d,
    Heatmap, EDR_DEFAULT_TAU,
};

/// Number of probability levels in a reported rate CDF.
pub const CDF_POINTS: usize = 1000;

/// Something that picks a base station for every active user.
pub trait AssociationPolicy {
    fn name(&self) -> &str;
    fn act(&mut self, env: &NetEnv) -> Vec<usize>;
    /// Called after each step with its outcome.
    fn observe(&mut self, _result: &StepResult) {}
}

/// Every user joins the base station with the largest current SINR.
#[derive(Debug, Clone, Copy, Default)]
pub struct MaxSinr;

pub fn max_sinr_policy(env: &NetEnv) -> Vec<usize> {
    env.sinr().iter().map(|s| argmax(s)).collect()
}

impl AssociationPolicy for MaxSinr {
    fn name(&self) -> &str {
        "max-sinr"
    }

    fn act(&mut self, env: &NetEnv) -> Vec<usize> {
        max_sinr_policy(env)
    }
}

/// The learned policy, with one recurrent state per user.
#[derive(Debug, Clone)]
pub struct Drl {
    pub params: PolicyParams,
    pub top_n: usize,
    /// pick the most likely action instead of sampling
    pub greedy: bool,
    memory: BTreeMap<u64, Memory>,
    rng: SimRng,
    pending: Vec<(u64, Memory)>,
}

impl Drl {
    pub fn new(params: PolicyParams, top_n: usize, greedy: bool, rng: SimRng) -> Self {
        Drl {
            params,
            top_n,
            greedy,
            memory: BTreeMap::new(),
            rng,
            pending: Vec::new(),
        }
    }
}

impl AssociationPolicy for Drl {
    fn name(&self) -> &str {
        "drl"
    }

    fn act(&mut self, env: &NetEnv) -> Vec<usize> {
        let obs = env.observations();
        let ids = env.user_ids();
        let hidden = self.params.shape().hidden;
        let masks = masks_for(&obs, self.top_n);
        let mem: Vec<Memory> = ids
            .iter()
            .map(|id| self.memory.get(id).cloned().unwrap_or_else(|| Memory::zeros(hidden)))
            .collect();
        let (actions, memory) = if self.greedy {
            let out = self.params.forward(&obs, &mem, &masks);
            let a = (0..obs.len())
                .map(|k| greedy_index(out.probs.row(k).as_slice().expect("contiguous")))
                .collect();
            (a, out.memory)
        } else {
            let out = self.params.act(&obs, &mem, &masks, &mut self.rng);
            (out.actions, out.memory)
        };
        self.pending = ids.into_iter().zip(memory).collect();
        actions
    }

    fn observe(&mut self, result: &StepResult) {
        for (id, m) in self.pending.drain(..) {
            self.memory.insert(id, m);
        }
        for id in &result.departed {
            self.memory.remove(id);
        }
    }
}

/// Summary of a policy over an evaluation run; every (user, slot) pair is
/// one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub policy: String,
    pub slots: u64,
    pub samples: u64,
    pub five_pct_rate: f64,
    pub utility: f64,
    pub mean_rate: f64,
    pub handover_per_user_slot: f64,
    /// `(rate, p)` pairs
    pub cdf: Vec<(f64, f64)>,
}

/// Play `slots` slots and collect per-sample rates.
pub fn run_policy<P: AssociationPolicy + ?Sized>(policy: &mut P, env: &mut NetEnv, slots: u64) -> Result<(Vec<f64>, u64)> {
    let mut rates = Vec::new();
    let mut handovers = 0u64;
    for _ in 0..slots {
        let a = policy.act(env);
        let res = env.step(&a)?;
        for r in &res.records {
            rates.push(r.rate);
            handovers += r.handover as u64;
        }
        policy.observe(&res);
    }
    Ok((rates, handovers))
}

pub fn evaluate_policy<P: AssociationPolicy + ?Sized>(policy: &mut P, env: &mut NetEnv, slots: u64) -> Result<EvalReport> {
    let (rates, handovers) = run_policy(policy, env, slots)?;
    if rates.is_empty() {
        return Err(crate::Error::Contract("evaluation produced no samples".into()));
    }
    let n = rates.len() as f64;
    Ok(EvalReport {
        policy: policy.name().to_string(),
        slots,
        samples: rates.len() as u64,
        five_pct_rate: five_pct_rate(&rates),
        utility: log_utility(&rates),
        mean_rate: rates.iter().sum::<f64>() / n,
        handover_per_user_slot: handovers as f64 / n,
        cdf: rate_cdf(&rates, CDF_POINTS),
    })
}
