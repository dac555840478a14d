//! Collecting one round of samples from every environment under a single
//! parameter snapshot.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{featurize_into, gae_advantages, masks_for, Chunk, Memory, PolicyParams, TrainBatch, ValueNormalizer};
use crate::env::{utility, NetEnv};
use crate::error::Result;
use crate::rng::SimRng;

/// An environment together with the recurrent state of its users and the
/// stream its actions are sampled from.
#[derive(Debug, Clone)]
pub struct EnvWorker {
    pub env: NetEnv,
    pub memory: BTreeMap<u64, Memory>,
    pub rng: SimRng,
}

/// Serializable part of an `EnvWorker`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorkerSnapshot {
    pub env: crate::env::EnvState,
    pub memory: BTreeMap<u64, Memory>,
    pub rng: SimRng,
}

impl EnvWorker {
    pub fn snapshot(&self) -> WorkerSnapshot {
        WorkerSnapshot {
            env: self.env.snapshot(),
            memory: self.memory.clone(),
            rng: self.rng.clone(),
        }
    }

    pub fn restore(&mut self, s: WorkerSnapshot) -> Result<()> {
        self.env.restore(s.env)?;
        self.memory = s.memory;
        self.rng = s.rng;
        Ok(())
    }
}

/// Consecutive samples of one user within a round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UserSeq {
    pub user: u64,
    pub features: Vec<f64>,
    pub masks: Vec<bool>,
    pub actions: Vec<usize>,
    pub logp: Vec<f64>,
    /// critic outputs in normalized units
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub dones: Vec<bool>,
    /// the policy chose the action (not an imposed arrival association)
    pub active: Vec<bool>,
    /// user count of the environment in the slot of each sample
    pub user_counts: Vec<usize>,
    /// recurrent state before every `seq_len`-th sample
    pub snapshots: Vec<Memory>,
    /// normalized critic value after the last sample, if still active
    pub bootstrap: Option<f64>,
}

impl UserSeq {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

/// Samples of one environment in one round.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnvRollout {
    /// in order of first appearance
    pub users: Vec<UserSeq>,
    /// mean utility over users, per slot
    pub step_utility: Vec<f64>,
    pub step_reward: Vec<f64>,
    pub step_users: Vec<usize>,
}

/// Samples of all environments, in environment order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleBuffer {
    pub envs: Vec<EnvRollout>,
}

impl SampleBuffer {
    pub fn len(&self) -> usize {
        self.envs.iter().map(|e| e.users.iter().map(UserSeq::len).sum::<usize>()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Per-sample environment user count, every sample of the round.
    pub fn sample_user_counts(&self) -> Vec<usize> {
        self.envs
            .iter()
            .flat_map(|e| e.users.iter().flat_map(|u| u.user_counts.iter().copied()))
            .collect()
    }

    /// Average over environment steps of the per-step mean utility.
    pub fn mean_utility(&self) -> f64 {
        mean(self.envs.iter().flat_map(|e| e.step_utility.iter().copied()))
    }

    pub fn mean_reward(&self) -> f64 {
        mean(self.envs.iter().flat_map(|e| e.step_reward.iter().copied()))
    }

    /// GAE over every user sequence and assembly into chunked training
    /// data. Values are de-normalized with `norm` before bootstrapping.
    pub fn to_batch(&self, gamma: f64, lambda: f64, seq_len: usize, norm: &ValueNormalizer) -> TrainBatch {
        let mut b = TrainBatch::default();
        for e in &self.envs {
            for u in &e.users {
                let n = u.len();
                if n == 0 {
                    continue;
                }
                let mut v: Vec<f64> = u.values.iter().map(|&x| norm.denormalize(x)).collect();
                v.push(u.bootstrap.map_or(0.0, |x| norm.denormalize(x)));
                let (adv, ret) = gae_advantages(&u.rewards, &v, &u.dones, gamma, lambda);
                let base = b.actions.len();
                for (ci, start) in (0..n).step_by(seq_len).enumerate() {
                    let snap = &u.snapshots[ci];
                    b.chunks.push(Chunk {
                        start: base + start,
                        len: seq_len.min(n - start),
                        h0: snap.h.clone(),
                        c0: snap.c.clone(),
                    });
                }
                b.features.extend_from_slice(&u.features);
                b.masks.extend_from_slice(&u.masks);
                b.actions.extend_from_slice(&u.actions);
                b.old_logp.extend_from_slice(&u.logp);
                b.active.extend_from_slice(&u.active);
                b.advantages.extend(adv);
                b.returns.extend(ret);
            }
        }
        b
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Advance one worker `rollout_length` slots under `params`.
pub fn rollout_env(
    worker: &mut EnvWorker,
    params: &PolicyParams,
    top_n: usize,
    rollout_length: usize,
    seq_len: usize,
) -> Result<EnvRollout> {
    let sh = params.shape();
    let d = sh.input;
    let mut out = EnvRollout::default();
    let mut slot_of: BTreeMap<u64, usize> = BTreeMap::new();
    for _ in 0..rollout_length {
        let env = &mut worker.env;
        let ids = env.user_ids();
        let n = ids.len();
        let obs = env.observations();
        let masks = masks_for(&obs, top_n);
        let mem: Vec<Memory> = ids
            .iter()
            .map(|id| worker.memory.get(id).cloned().unwrap_or_else(|| Memory::zeros(sh.hidden)))
            .collect();
        let act = params.act(&obs, &mem, &masks, &mut worker.rng);
        let res = env.step(&act.actions)?;
        let mut u_sum = 0.0;
        let mut r_sum = 0.0;
        for k in 0..n {
            let id = ids[k];
            let idx = *slot_of.entry(id).or_insert_with(|| {
                out.users.push(UserSeq {
                    user: id,
                    ..Default::default()
                });
                out.users.len() - 1
            });
            let seq = &mut out.users[idx];
            if seq.len() % seq_len == 0 {
                seq.snapshots.push(mem[k].clone());
            }
            let off = seq.features.len();
            seq.features.resize(off + d, 0.0);
            featurize_into(&obs[k], &mut seq.features[off..]);
            seq.masks.extend_from_slice(&masks[k]);
            let rec = &res.records[k];
            seq.actions.push(rec.action);
            seq.logp.push(if rec.forced { 0.0 } else { act.logp[k] });
            seq.active.push(!rec.forced);
            seq.values.push(act.values[k]);
            seq.rewards.push(rec.reward);
            seq.dones.push(rec.done);
            seq.user_counts.push(n);
            u_sum += utility(rec.rate);
            r_sum += rec.reward;
        }
        if n > 0 {
            out.step_utility.push(u_sum / n as f64);
            out.step_reward.push(r_sum / n as f64);
        }
        out.step_users.push(n);
        for (k, id) in ids.iter().enumerate() {
            worker.memory.insert(*id, act.memory[k].clone());
        }
        for id in &res.departed {
            worker.memory.remove(id);
        }
    }
    // bootstrap values for users still present
    let env = &worker.env;
    let ids = env.user_ids();
    let obs = env.observations();
    if !ids.is_empty() {
        let masks = masks_for(&obs, top_n);
        let mem: Vec<Memory> = ids
            .iter()
            .map(|id| worker.memory.get(id).cloned().unwrap_or_else(|| Memory::zeros(sh.hidden)))
            .collect();
        let f = params.forward(&obs, &mem, &masks);
        for (k, id) in ids.iter().enumerate() {
            if let Some(&idx) = slot_of.get(id) {
                out.users[idx].bootstrap = Some(f.values[k]);
            }
        }
    }
    Ok(out)
}

/// Advance every worker `rollout_length` slots under the same `params`;
/// workers run concurrently and results come back in worker order.
pub fn collect_round(
    workers: &mut [EnvWorker],
    params: &PolicyParams,
    top_n: usize,
    rollout_length: usize,
    seq_len: usize,
) -> Result<SampleBuffer> {
    let envs = workers
        .par_iter_mut()
        .map(|w| rollout_env(w, params, top_n, rollout_length, seq_len))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleBuffer { envs })
}
