//! Parallel digital-twin training: K environments at different user
//! densities feed one shared policy under a fixed sample budget.

mod checkpoint;
mod rollout;

pub use checkpoint::{read_checkpoint_info, CheckpointInfo, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use rollout::{collect_round, rollout_env, EnvRollout, EnvWorker, SampleBuffer, UserSeq, WorkerSnapshot};

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{ppo_update, Adam, NetShape, PolicyParams, PpoHyper, UpdateStats, ValueNormalizer};
use crate::env::{EnvConfig, NetEnv};
use crate::error::{Error, Result};
use crate::geo::MobilitySource;
use crate::radio::Channel;
use crate::rng::{derive_seed, stream_rng, SimRng, Stream};
use crate::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub parallel_envs: usize,
    /// explicit initial user count per environment; evenly spaced over the
    /// scenario's range when absent
    pub initial_counts: Option<Vec<usize>>,
    /// slots per environment per collection round
    pub rollout_length: usize,
    pub sample_budget: u64,
    /// rounds between checkpoints; 0 disables them
    pub checkpoint_interval: u64,
    pub seed: u64,
    pub hidden: usize,
    pub ppo: PpoHyper,
    pub env: EnvConfig,
}

impl TrainerConfig {
    pub fn for_scenario(s: &ScenarioConfig) -> Self {
        TrainerConfig {
            parallel_envs: 1,
            initial_counts: None,
            rollout_length: 16,
            sample_budget: 5_000_000,
            checkpoint_interval: 0,
            seed: s.master_seed,
            hidden: 128,
            ppo: PpoHyper::default(),
            env: EnvConfig::for_scenario(s),
        }
    }

    pub fn validate(&self, s: &ScenarioConfig) -> Result<()> {
        if self.parallel_envs == 0 {
            return Err(Error::Config("parallel_envs must be at least 1".into()));
        }
        if self.sample_budget == 0 || self.rollout_length == 0 || self.hidden == 0 {
            return Err(Error::Config("sample_budget, rollout_length and hidden must be positive".into()));
        }
        if let Some(c) = &self.initial_counts {
            if c.len() != self.parallel_envs {
                return Err(Error::Config(format!(
                    "{} initial counts for {} environments",
                    c.len(),
                    self.parallel_envs
                )));
            }
        }
        let (lo, hi) = self.env.population.user_count_range;
        if (lo, hi) != s.user_count_range {
            return Err(Error::Config("population user_count_range must match the scenario".into()));
        }
        self.ppo.validate()
    }

    pub fn initial_counts(&self) -> Vec<usize> {
        self.initial_counts
            .clone()
            .unwrap_or_else(|| spread_counts(self.env.population.user_count_range, self.parallel_envs))
    }
}

/// Evenly spaced inclusive counts over `[lo, hi]`; a single environment
/// sits at the midpoint.
pub fn spread_counts((lo, hi): (usize, usize), k: usize) -> Vec<usize> {
    if k == 1 {
        return vec![(lo + hi) / 2];
    }
    (0..k)
        .map(|i| lo + ((hi - lo) as f64 * i as f64 / (k - 1) as f64).round() as usize)
        .collect()
}

/// K environments with independent streams derived from `seed`.
pub fn spawn_envs(
    scenario: &Arc<ScenarioConfig>,
    channel: &Arc<Channel>,
    source: &MobilitySource,
    env_cfg: &EnvConfig,
    counts: &[usize],
    seed: u64,
) -> Result<Vec<EnvWorker>> {
    counts
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let env_seed = derive_seed(seed, Stream::Environment, k as u64);
            Ok(EnvWorker {
                env: NetEnv::new(scenario.clone(), channel.clone(), source.clone(), env_cfg.clone(), env_seed, n)?,
                memory: BTreeMap::new(),
                rng: stream_rng(env_seed, Stream::Policy, 0),
            })
        })
        .collect()
}

/// Sample accounting against a fixed budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleBudget {
    pub budget: u64,
    pub consumed: u64,
    pub env_steps: u64,
}

impl SampleBudget {
    pub fn new(budget: u64) -> Self {
        SampleBudget {
            budget,
            consumed: 0,
            env_steps: 0,
        }
    }

    /// One synchronous step of all environments producing `samples`.
    pub fn record_step(&mut self, samples: usize) {
        self.consumed += samples as u64;
        self.env_steps += 1;
    }

    pub fn exhausted(&self) -> bool {
        self.consumed >= self.budget
    }
}

/// One row of the training curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub round: u64,
    pub samples_seen: u64,
    pub mean_utility: f64,
    pub mean_reward: f64,
    pub entropy: f64,
    pub kl: f64,
}

pub const CURVE_HEADER: &str = "round,samples_seen,mean_utility,mean_reward,entropy,kl";

pub fn write_curve<W: Write>(curve: &[CurvePoint], mut w: W) -> Result<()> {
    let e = |e| Error::io("<curve>", e);
    writeln!(w, "{CURVE_HEADER}").map_err(e)?;
    for p in curve {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            p.round, p.samples_seen, p.mean_utility, p.mean_reward, p.entropy, p.kl
        )
        .map_err(e)?;
    }
    Ok(())
}

const MAX_BAD_ROUNDS: u32 = 3;

/// Training state: shared parameters, optimizer, environments and curve.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub(crate) cfg: TrainerConfig,
    pub(crate) scenario: Arc<ScenarioConfig>,
    pub(crate) channel: Arc<Channel>,
    pub(crate) source: MobilitySource,
    pub(crate) params: PolicyParams,
    pub(crate) adam: Adam,
    pub(crate) norm: ValueNormalizer,
    pub(crate) workers: Vec<EnvWorker>,
    pub(crate) round: u64,
    pub(crate) samples_seen: u64,
    pub(crate) curve: Vec<CurvePoint>,
    pub(crate) update_rng: SimRng,
    pub(crate) bad_rounds: u32,
}

impl Trainer {
    pub fn new(cfg: TrainerConfig, scenario: ScenarioConfig, source: MobilitySource) -> Result<Self> {
        scenario.validate()?;
        cfg.validate(&scenario)?;
        source.validate()?;
        let scenario = Arc::new(scenario);
        let channel = Arc::new(Channel::new(&scenario));
        let shape = NetShape::for_base_stations(scenario.num_base_stations(), cfg.hidden);
        let mut init_rng = stream_rng(cfg.seed, Stream::Init, 0);
        let params = PolicyParams::init(shape, &mut init_rng);
        let workers = spawn_envs(&scenario, &channel, &source, &cfg.env, &cfg.initial_counts(), cfg.seed)?;
        Ok(Trainer {
            adam: Adam::new(params.len()),
            norm: ValueNormalizer::default(),
            update_rng: stream_rng(cfg.seed, Stream::Minibatch, 0),
            cfg,
            scenario,
            channel,
            source,
            params,
            workers,
            round: 0,
            samples_seen: 0,
            curve: Vec::new(),
            bad_rounds: 0,
        })
    }

    pub fn config(&self) -> &TrainerConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn channel(&self) -> &Arc<Channel> {
        &self.channel
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn curve(&self) -> &[CurvePoint] {
        &self.curve
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn workers(&self) -> &[EnvWorker] {
        &self.workers
    }

    pub fn normalizer(&self) -> &ValueNormalizer {
        &self.norm
    }

    pub fn finished(&self) -> bool {
        self.samples_seen >= self.cfg.sample_budget
    }

    /// Collect under the current parameters without updating them.
    pub fn collect(&mut self) -> Result<SampleBuffer> {
        collect_round(
            &mut self.workers,
            &self.params,
            self.scenario.mask_top_n,
            self.cfg.rollout_length,
            self.cfg.ppo.seq_len,
        )
    }

    /// One collection round and one PPO update. A failing environment
    /// rolls every environment back to the start of the round.
    pub fn train_round(&mut self) -> Result<(CurvePoint, UpdateStats, SampleBuffer)> {
        let before: Vec<WorkerSnapshot> = self.workers.iter().map(EnvWorker::snapshot).collect();
        let buffer = match self.collect() {
            Ok(b) => b,
            Err(e) => {
                for (w, s) in self.workers.iter_mut().zip(before) {
                    w.restore(s)?;
                }
                return Err(e);
            }
        };
        let hp = self.cfg.ppo;
        let mut batch = buffer.to_batch(hp.gamma, hp.gae_lambda, hp.seq_len, &self.norm);
        self.norm.update(&batch.returns);
        let previous = self.params.clone();
        let stats = ppo_update(&mut self.params, &mut self.adam, &mut batch, &hp, &self.norm, &mut self.update_rng);
        let finite = stats.steps > 0 && stats.policy_loss.is_finite() && stats.value_loss.is_finite();
        if finite && self.params.is_finite() {
            self.bad_rounds = 0;
        } else {
            self.params = previous;
            self.bad_rounds += 1;
            if self.bad_rounds >= MAX_BAD_ROUNDS {
                return Err(Error::Numeric(format!(
                    "non-finite losses in {MAX_BAD_ROUNDS} consecutive rounds (last at round {}, {} rejected steps)",
                    self.round, stats.rejected
                )));
            }
        }
        self.round += 1;
        self.samples_seen += buffer.len() as u64;
        let point = CurvePoint {
            round: self.round,
            samples_seen: self.samples_seen,
            mean_utility: buffer.mean_utility(),
            mean_reward: buffer.mean_reward(),
            entropy: stats.entropy,
            kl: stats.approx_kl,
        };
        self.curve.push(point);
        Ok((point, stats, buffer))
    }

    /// Train until the sample budget is consumed, checkpointing every
    /// `checkpoint_interval` rounds into `checkpoint_dir`. Returns the
    /// checkpoint paths written. `progress` sees every round's curve point
    /// and update statistics.
    pub fn run(
        &mut self,
        checkpoint_dir: Option<&Path>,
        mut progress: impl FnMut(&CurvePoint, &UpdateStats),
    ) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        while !self.finished() {
            let (p, stats, _) = self.train_round()?;
            progress(&p, &stats);
            if let Some(dir) = checkpoint_dir {
                let every = self.cfg.checkpoint_interval;
                if (every > 0 && self.round % every == 0) || self.finished() {
                    let path = dir.join(format!("ckpt_{:06}.bin", self.round));
                    self.save_checkpoint(&path)?;
                    written.push(path);
                }
            }
        }
        Ok(written)
    }
}

/// Train a fresh policy to the budget; returns the parameters and curve.
pub fn train(cfg: TrainerConfig, scenario: ScenarioConfig, source: MobilitySource) -> Result<(PolicyParams, Vec<CurvePoint>)> {
    let mut t = Trainer::new(cfg, scenario, source)?;
    t.run(None, |_, _| {})?;
    Ok((t.params, t.curve))
}
