//! The association MDP: one environment advances a user population over a
//! shared channel, one slot per `step`.

mod link;

pub use link::{
    achievable_rate, evaluate_slot, reward, sample_handover, service_rate, sinr_from_received, utility, SlotOutcome,
    RATE_FLOOR,
};

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{MobilitySource, PopulationConfig, PopulationProcess};
use crate::geom::Point;
use crate::radio::{perturb_gain, Channel};
use crate::rng::{stream_rng, SimRng, Stream};
use crate::scenario::ScenarioConfig;

/// SINR to every BS at `p`, interference restricted to the same band.
pub fn sinr_vector(p: Point, channel: &Channel) -> Vec<f64> {
    let rx: Vec<f64> = channel.gains(p).iter().zip(channel.tx_power_mw()).map(|(g, pw)| g * pw).collect();
    let band_of: Vec<usize> = channel.base_stations().iter().map(|b| b.band_index).collect();
    sinr_from_received(&rx, &band_of, channel.noise_mw())
}

/// Per-user state `(SINR now, loads of the previous slot, previous
/// association)`. Length `3 |B|` whatever the number of users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub sinr: Vec<f64>,
    pub prev_loads: Vec<u32>,
    /// `None` for a user that arrived this slot
    pub prev_assoc: Option<usize>,
}

impl Observation {
    pub fn num_base_stations(&self) -> usize {
        self.sinr.len()
    }

    pub fn len(&self) -> usize {
        3 * self.sinr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sinr.is_empty()
    }

    /// Flat `(sinr, loads, one-hot association)` vector.
    pub fn to_vec(&self) -> Vec<f64> {
        let n = self.sinr.len();
        let mut v = Vec::with_capacity(3 * n);
        v.extend_from_slice(&self.sinr);
        v.extend(self.prev_loads.iter().map(|&l| l as f64));
        v.extend((0..n).map(|j| if self.prev_assoc == Some(j) { 1.0 } else { 0.0 }));
        v
    }
}

/// What one user experienced in one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub slot: u64,
    pub user: u64,
    pub action: usize,
    pub reward: f64,
    pub rate: f64,
    pub sinr_serving: f64,
    pub load_serving: u32,
    pub t_ho: f64,
    pub handover: bool,
    /// the environment chose `action` (first slot of a new arrival)
    pub forced: bool,
    /// the user left the area at the end of this slot
    pub done: bool,
}

#[derive(Serialize)]
struct LogLine {
    slot: u64,
    user: u64,
    action: usize,
    reward: f64,
    sinr_serving: f64,
    load_serving: u32,
    t_ho: f64,
}

/// Append records as JSON lines `{slot, user, action, reward, sinr_serving,
/// load_serving, t_ho}`.
pub fn write_sample_log<W: Write>(records: &[StepRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = LogLine {
            slot: r.slot,
            user: r.user,
            action: r.action,
            reward: r.reward,
            sinr_serving: r.sinr_serving,
            load_serving: r.load_serving,
            t_ho: r.t_ho,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n").map_err(|e| Error::io("<sample log>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub population: PopulationConfig,
    /// relative per-link gain disturbance, redrawn every slot
    pub disturbance: f64,
}

impl EnvConfig {
    pub fn for_scenario(s: &ScenarioConfig) -> Self {
        EnvConfig {
            population: PopulationConfig::balanced(s.user_count_range),
            disturbance: 0.0,
        }
    }
}

/// Everything that changes while an environment runs. Cloning it is a
/// complete snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvState {
    pub population: PopulationProcess,
    /// previous association per user, aligned with `population.users()`
    pub prev_assoc: Vec<Option<usize>>,
    pub prev_loads: Vec<u32>,
    /// SINR of the current slot per user
    pub sinr: Vec<Vec<f64>>,
    pub handover_rng: SimRng,
    pub disturbance_rng: SimRng,
}

/// Outcome of `NetEnv::step`, in the user order of the slot just played.
#[derive(Debug, Clone, Default)]
pub struct StepResult {
    pub records: Vec<StepRecord>,
    pub arrived: Vec<u64>,
    pub departed: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct NetEnv {
    scenario: Arc<ScenarioConfig>,
    channel: Arc<Channel>,
    source: MobilitySource,
    cfg: EnvConfig,
    band_of: Vec<usize>,
    bandwidth: Vec<f64>,
    state: EnvState,
}

impl NetEnv {
    /// Build and `reset` an environment.
    pub fn new(
        scenario: Arc<ScenarioConfig>,
        channel: Arc<Channel>,
        source: MobilitySource,
        cfg: EnvConfig,
        seed: u64,
        initial_users: usize,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&cfg.disturbance) {
            return Err(Error::Config(format!("disturbance {} outside [0, 1)", cfg.disturbance)));
        }
        let band_of: Vec<usize> = channel.base_stations().iter().map(|b| b.band_index).collect();
        let bandwidth = channel.base_stations().iter().map(|b| b.band.bandwidth).collect();
        let state = Self::fresh_state(&scenario, &channel, &source, &cfg, &band_of, seed, initial_users)?;
        Ok(NetEnv {
            scenario,
            channel,
            source,
            cfg,
            band_of,
            bandwidth,
            state,
        })
    }

    /// Fresh random streams from `seed`, `initial_users` placed by the
    /// mobility source and associated by Max-SINR, which defines the
    /// previous association and loads of the first slot.
    pub fn reset(&mut self, seed: u64, initial_users: usize) -> Result<()> {
        self.state = Self::fresh_state(
            &self.scenario,
            &self.channel,
            &self.source,
            &self.cfg,
            &self.band_of,
            seed,
            initial_users,
        )?;
        Ok(())
    }

    fn fresh_state(
        scenario: &ScenarioConfig,
        channel: &Channel,
        source: &MobilitySource,
        cfg: &EnvConfig,
        band_of: &[usize],
        seed: u64,
        initial_users: usize,
    ) -> Result<EnvState> {
        let population = PopulationProcess::new(
            cfg.population.clone(),
            scenario.slot_duration,
            initial_users,
            source,
            seed,
        )?;
        let mut state = EnvState {
            population,
            prev_assoc: Vec::new(),
            prev_loads: vec![0; channel.num_base_stations()],
            sinr: Vec::new(),
            handover_rng: stream_rng(seed, Stream::Handover, 0),
            disturbance_rng: stream_rng(seed, Stream::Disturbance, 0),
        };
        state.sinr = Self::measure(channel, band_of, cfg.disturbance, &state.population, &mut state.disturbance_rng);
        for s in &state.sinr {
            let j = argmax(s);
            state.prev_assoc.push(Some(j));
            state.prev_loads[j] += 1;
        }
        Ok(state)
    }

    fn measure(
        channel: &Channel,
        band_of: &[usize],
        disturbance: f64,
        population: &PopulationProcess,
        rng: &mut SimRng,
    ) -> Vec<Vec<f64>> {
        let tx = channel.tx_power_mw();
        population
            .positions()
            .into_iter()
            .map(|p| {
                let mut rx = channel.gains(p);
                for (j, g) in rx.iter_mut().enumerate() {
                    *g = perturb_gain(*g, disturbance, rng) * tx[j];
                }
                sinr_from_received(&rx, band_of, channel.noise_mw())
            })
            .collect()
    }

    pub fn scenario(&self) -> &ScenarioConfig {
        &self.scenario
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn num_base_stations(&self) -> usize {
        self.band_of.len()
    }

    pub fn num_users(&self) -> usize {
        self.state.population.len()
    }

    pub fn slot(&self) -> u64 {
        self.state.population.slot()
    }

    pub fn user_ids(&self) -> Vec<u64> {
        self.state.population.users().iter().map(|u| u.id).collect()
    }

    pub fn positions(&self) -> Vec<Point> {
        self.state.population.positions()
    }

    pub fn sinr(&self) -> &[Vec<f64>] {
        &self.state.sinr
    }

    pub fn prev_loads(&self) -> &[u32] {
        &self.state.prev_loads
    }

    pub fn prev_assoc(&self) -> &[Option<usize>] {
        &self.state.prev_assoc
    }

    pub fn observation(&self, k: usize) -> Observation {
        Observation {
            sinr: self.state.sinr[k].clone(),
            prev_loads: self.state.prev_loads.clone(),
            prev_assoc: self.state.prev_assoc[k],
        }
    }

    pub fn observations(&self) -> Vec<Observation> {
        (0..self.num_users()).map(|k| self.observation(k)).collect()
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn snapshot(&self) -> EnvState {
        self.state.clone()
    }

    pub fn restore(&mut self, state: EnvState) -> Result<()> {
        let n = state.population.len();
        if state.prev_assoc.len() != n || state.sinr.len() != n || state.prev_loads.len() != self.num_base_stations() {
            return Err(Error::Checkpoint("environment snapshot is inconsistent".into()));
        }
        self.state = state;
        Ok(())
    }

    /// Apply one action per current user (in `user_ids()` order), then
    /// advance mobility and the population by one slot.
    pub fn step(&mut self, actions: &[usize]) -> Result<StepResult> {
        let n_users = self.num_users();
        let n_bs = self.num_base_stations();
        if actions.len() != n_users {
            return Err(Error::Contract(format!("{} actions for {n_users} users", actions.len())));
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= n_bs) {
            return Err(Error::Contract(format!("action {a} outside [0, {n_bs})")));
        }
        let st = &mut self.state;
        // users without a previous association join their strongest BS
        let actions: Vec<usize> = actions
            .iter()
            .enumerate()
            .map(|(k, &a)| if st.prev_assoc[k].is_none() { argmax(&st.sinr[k]) } else { a })
            .collect();
        let actions = &actions[..];
        let model = &self.scenario.handover;
        let t_ho: Vec<f64> = actions
            .iter()
            .zip(&st.prev_assoc)
            .map(|(&a, &prev)| sample_handover(prev, a, model, &mut st.handover_rng))
            .collect();
        let out = evaluate_slot(
            &st.sinr,
            actions,
            &t_ho,
            &self.bandwidth,
            self.scenario.slot_duration,
            self.scenario.reward_alpha,
        )?;
        let slot = st.population.slot();
        let mut records: Vec<StepRecord> = (0..n_users)
            .map(|k| {
                let a = actions[k];
                StepRecord {
                    slot,
                    user: st.population.users()[k].id,
                    action: a,
                    reward: out.rewards[k],
                    rate: out.rates[k],
                    sinr_serving: st.sinr[k][a],
                    load_serving: out.loads[a],
                    t_ho: t_ho[k],
                    handover: matches!(st.prev_assoc[k], Some(p) if p != a),
                    forced: st.prev_assoc[k].is_none(),
                    done: false,
                }
            })
            .collect();

        let events = st.population.step(&self.source);
        let mut assoc = Vec::with_capacity(st.population.len());
        let mut d = 0;
        for (k, r) in records.iter_mut().enumerate() {
            if events.departed.get(d) == Some(&r.user) {
                r.done = true;
                d += 1;
            } else {
                assoc.push(Some(actions[k]));
            }
        }
        debug_assert_eq!(d, events.departed.len());
        assoc.resize(st.population.len(), None);
        st.prev_assoc = assoc;
        st.prev_loads = out.loads;
        st.sinr = Self::measure(
            &self.channel,
            &self.band_of,
            self.cfg.disturbance,
            &st.population,
            &mut st.disturbance_rng,
        );
        Ok(StepResult {
            records,
            arrived: events.arrived,
            departed: events.departed,
        })
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = j;
        }
    }
    best
}

/// Draw a uniformly random action per user; handy for smoke runs.
pub fn random_actions<R: Rng + ?Sized>(n_users: usize, n_bs: usize, rng: &mut R) -> Vec<usize> {
    (0..n_users).map(|_| rng.random_range(0..n_bs)).collect()
}
