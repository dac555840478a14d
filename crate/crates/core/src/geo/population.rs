//! Users entering and leaving the area.
//!
//! Each slot: departures for users whose trajectory has ended, then
//! Poisson arrivals with fresh trajectories. The count is held inside
//! `user_count_range` by suppressing arrivals at the maximum and by
//! extending (ping-pong) trajectories that would end below the minimum.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BBox, Point};
use crate::rng::{stream_rng, SimRng, Stream};

use super::graph::StreetGraph;
use super::mobility::{gm_trajectory, m_gm_trajectory, m_rwp_trajectory, rwp_trajectory, GaussMarkovParams};
use super::trajectory::Trajectory;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum MobilityModel {
    Rwp { v_range: (f64, f64) },
    Gm(GaussMarkovParams),
    MRwp { v_range: (f64, f64) },
    MGm(GaussMarkovParams),
    Playback,
}

/// Default per-leg speed range for the waypoint models, m/s.
pub const DEFAULT_V_RANGE: (f64, f64) = (1.0, 15.0);

impl MobilityModel {
    /// The model called `name` with default parameters.
    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "rwp" => MobilityModel::Rwp { v_range: DEFAULT_V_RANGE },
            "gm" => MobilityModel::Gm(GaussMarkovParams::default()),
            "mrwp" => MobilityModel::MRwp { v_range: DEFAULT_V_RANGE },
            "mgm" => MobilityModel::MGm(GaussMarkovParams::default()),
            "playback" => MobilityModel::Playback,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            MobilityModel::Rwp { .. } => "rwp",
            MobilityModel::Gm(_) => "gm",
            MobilityModel::MRwp { .. } => "mrwp",
            MobilityModel::MGm(_) => "mgm",
            MobilityModel::Playback => "playback",
        }
    }
}

/// Everything needed to draw a fresh user trajectory.
#[derive(Debug, Clone)]
pub struct MobilitySource {
    pub model: MobilityModel,
    pub graph: Option<Arc<StreetGraph>>,
    pub traces: Option<Arc<Vec<Trajectory>>>,
    pub area: BBox,
    /// sampling step of generated trajectories, s
    pub dt: f64,
    /// per-user dwell time in the area, s
    pub lifetime: (f64, f64),
}

impl MobilitySource {
    pub fn new(model: MobilityModel, area: BBox) -> Self {
        MobilitySource {
            model,
            graph: None,
            traces: None,
            area,
            dt: 1.0,
            lifetime: (60.0, 300.0),
        }
    }

    pub fn with_graph(mut self, graph: Arc<StreetGraph>) -> Self {
        self.graph = Some(graph);
        self
    }

    pub fn with_traces(mut self, traces: Arc<Vec<Trajectory>>) -> Self {
        self.traces = Some(traces);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let needs_graph = matches!(self.model, MobilityModel::MRwp { .. } | MobilityModel::MGm(_));
        if needs_graph && self.graph.as_ref().is_none_or(|g| g.num_nodes() == 0) {
            return Err(Error::Config(format!("{} mobility needs a street graph", self.model.name())));
        }
        if matches!(self.model, MobilityModel::Playback) && self.traces.as_ref().is_none_or(|t| t.is_empty()) {
            return Err(Error::Config("playback mobility needs at least one trace".into()));
        }
        if let MobilityModel::Rwp { v_range } | MobilityModel::MRwp { v_range } = self.model {
            if !(v_range.0 > 0.0 && v_range.1 >= v_range.0) {
                return Err(Error::Config(format!("bad speed range {v_range:?}")));
            }
        }
        if !(self.dt > 0.0 && self.lifetime.0 > 0.0 && self.lifetime.1 >= self.lifetime.0) {
            return Err(Error::Config("bad mobility dt or lifetime range".into()));
        }
        Ok(())
    }

    pub fn mean_lifetime(&self) -> f64 {
        match (&self.model, &self.traces) {
            (MobilityModel::Playback, Some(t)) if !t.is_empty() => {
                t.iter().map(|x| x.duration()).sum::<f64>() / t.len() as f64
            }
            _ => 0.5 * (self.lifetime.0 + self.lifetime.1),
        }
    }

    /// A trajectory starting at t = 0.
    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Trajectory {
        let life = if self.lifetime.1 > self.lifetime.0 {
            rng.random_range(self.lifetime.0..=self.lifetime.1)
        } else {
            self.lifetime.0
        };
        match &self.model {
            MobilityModel::Rwp { v_range } => rwp_trajectory(rng, self.area, *v_range, life, self.dt),
            MobilityModel::Gm(p) => gm_trajectory(rng, self.area, p, life, self.dt),
            MobilityModel::MRwp { v_range } => {
                m_rwp_trajectory(rng, self.graph.as_deref().expect("validated"), *v_range, life, self.dt)
            }
            MobilityModel::MGm(p) => m_gm_trajectory(rng, self.graph.as_deref().expect("validated"), p, life, self.dt),
            MobilityModel::Playback => {
                let traces = self.traces.as_deref().expect("validated");
                let t = &traces[rng.random_range(0..traces.len())];
                t.shifted(-t.start_time())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalRule {
    /// users per slot
    Fixed(f64),
    /// rate that keeps the count near a target: target / mean lifetime in slots
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub user_count_range: (usize, usize),
    pub arrival: ArrivalRule,
    /// per-slot std of the random walk of the target count (Balanced only)
    pub drift_std: f64,
}

impl PopulationConfig {
    pub fn balanced(user_count_range: (usize, usize)) -> Self {
        PopulationConfig {
            user_count_range,
            arrival: ArrivalRule::Balanced,
            drift_std: 0.5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ActiveUser {
    pub id: u64,
    pub entry_slot: u64,
    pub trajectory: Trajectory,
}

/// What happened during one population step, by user id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PopulationEvents {
    pub departed: Vec<u64>,
    pub arrived: Vec<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationProcess {
    cfg: PopulationConfig,
    slot_duration: f64,
    slot: u64,
    target: f64,
    next_id: u64,
    users: Vec<ActiveUser>,
    rng: SimRng,
    mobility_rng: SimRng,
}

impl PopulationProcess {
    /// `initial_count` users, each placed at a uniformly random phase of a
    /// fresh trajectory.
    pub fn new(
        cfg: PopulationConfig,
        slot_duration: f64,
        initial_count: usize,
        source: &MobilitySource,
        seed: u64,
    ) -> Result<Self> {
        let (lo, hi) = cfg.user_count_range;
        if lo > hi || !(lo..=hi).contains(&initial_count) {
            return Err(Error::Config(format!(
                "initial user count {initial_count} outside {:?}",
                cfg.user_count_range
            )));
        }
        if let ArrivalRule::Fixed(r) = cfg.arrival {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::Config(format!("bad arrival rate {r}")));
            }
        }
        source.validate()?;
        let mut p = PopulationProcess {
            target: initial_count as f64,
            cfg,
            slot_duration,
            slot: 0,
            next_id: 0,
            users: Vec::with_capacity(hi),
            rng: stream_rng(seed, Stream::Population, 0),
            mobility_rng: stream_rng(seed, Stream::Mobility, 0),
        };
        for _ in 0..initial_count {
            let traj = source.generate(&mut p.mobility_rng);
            let phase = p.rng.random::<f64>() * traj.duration();
            p.push_user(traj.shifted(-phase));
        }
        Ok(p)
    }

    fn push_user(&mut self, trajectory: Trajectory) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.users.push(ActiveUser {
            id,
            entry_slot: self.slot,
            trajectory,
        });
        id
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    pub fn time(&self) -> f64 {
        self.slot as f64 * self.slot_duration
    }

    pub fn users(&self) -> &[ActiveUser] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn config(&self) -> &PopulationConfig {
        &self.cfg
    }

    pub fn positions(&self) -> Vec<Point> {
        let t = self.time();
        self.users.iter().map(|u| u.trajectory.position_at(t)).collect()
    }

    fn arrival_rate(&self, source: &MobilitySource) -> f64 {
        match self.cfg.arrival {
            ArrivalRule::Fixed(r) => r,
            ArrivalRule::Balanced => {
                let slots = (source.mean_lifetime() / self.slot_duration).max(1.0);
                self.target / slots
            }
        }
    }

    /// Advance one slot. Users keep their relative order; arrivals are
    /// appended.
    pub fn step(&mut self, source: &MobilitySource) -> PopulationEvents {
        self.slot += 1;
        let t = self.time();
        let (lo, hi) = self.cfg.user_count_range;
        if self.cfg.arrival == ArrivalRule::Balanced && self.cfg.drift_std > 0.0 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            let mut x = self.target + self.cfg.drift_std * z;
            let (a, b) = (lo as f64, hi as f64);
            if x < a {
                x = 2.0 * a - x;
            }
            if x > b {
                x = 2.0 * b - x;
            }
            self.target = x.clamp(a, b);
        }

        let mut events = PopulationEvents::default();
        let mut keep = Vec::with_capacity(self.users.len());
        let mut remaining = self.users.len();
        for mut u in std::mem::take(&mut self.users) {
            if u.trajectory.end_time() < t {
                if remaining > lo {
                    remaining -= 1;
                    events.departed.push(u.id);
                    continue;
                }
                let extra = source.lifetime.0.max(self.slot_duration);
                u.trajectory.extend_ping_pong(t + extra);
            }
            keep.push(u);
        }
        self.users = keep;

        let lambda = self.arrival_rate(source);
        let mut n = if lambda > 0.0 {
            Poisson::new(lambda).map_or(0, |d| d.sample(&mut self.rng) as usize)
        } else {
            0
        };
        n = n.min(hi.saturating_sub(self.users.len()));
        for _ in 0..n {
            let traj = source.generate(&mut self.mobility_rng).shifted(t);
            events.arrived.push(self.push_user(traj));
        }
        events
    }
}
