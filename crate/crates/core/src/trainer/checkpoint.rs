//! Checkpoint file:
//! ```text
//! magic "DTCK" | version u32 | weights_len u64 | weights container
//!              | state_len u64 | JSON trainer state
//! ```
//! The JSON state carries the optimizer, value normalizer, every
//! environment snapshot and all random stream positions, so a restored
//! trainer continues bit-exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::{read_weights, write_weights, Adam, PolicyParams, ValueNormalizer};
use crate::error::{Error, Result};
use crate::geo::{MobilityModel, MobilitySource};
use crate::radio::Channel;
use crate::rng::SimRng;
use crate::scenario::ScenarioConfig;

use super::{spawn_envs, CurvePoint, Trainer, TrainerConfig, WorkerSnapshot};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct State {
    config: TrainerConfig,
    scenario: ScenarioConfig,
    mobility: MobilityModel,
    round: u64,
    samples_seen: u64,
    curve: Vec<CurvePoint>,
    adam: Adam,
    norm: ValueNormalizer,
    update_rng: SimRng,
    bad_rounds: u32,
    workers: Vec<WorkerSnapshot>,
}

impl Trainer {
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let e = |e| Error::io("<checkpoint>", e);
        let mut weights = Vec::new();
        write_weights(&self.params, &mut weights)?;
        let state = State {
            config: self.cfg.clone(),
            scenario: (*self.scenario).clone(),
            mobility: self.source.model.clone(),
            round: self.round,
            samples_seen: self.samples_seen,
            curve: self.curve.clone(),
            adam: self.adam.clone(),
            norm: self.norm.clone(),
            update_rng: self.update_rng.clone(),
            bad_rounds: self.bad_rounds,
            workers: self.workers.iter().map(|w| w.snapshot()).collect(),
        };
        let json = serde_json::to_vec(&state)?;
        w.write_all(CHECKPOINT_MAGIC).map_err(e)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes()).map_err(e)?;
        w.write_all(&(weights.len() as u64).to_le_bytes()).map_err(e)?;
        w.write_all(&weights).map_err(e)?;
        w.write_all(&(json.len() as u64).to_le_bytes()).map_err(e)?;
        w.write_all(&json).map_err(e)?;
        w.flush().map_err(e)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_checkpoint(BufWriter::new(f))
    }

    /// Rebuild a trainer from checkpoint bytes. `source` must describe the
    /// same mobility model the checkpoint was trained with.
    pub fn read_checkpoint<R: Read>(r: R, source: MobilitySource) -> Result<Trainer> {
        let (params, state) = parse(r)?;
        if state.mobility != source.model {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained with {} mobility, got {}",
                state.mobility.name(),
                source.model.name()
            )));
        }
        state.scenario.validate()?;
        let scenario = Arc::new(state.scenario);
        let channel = Arc::new(Channel::new(&scenario));
        let counts = vec![scenario.user_count_range.0; state.workers.len()];
        let mut workers = spawn_envs(&scenario, &channel, &source, &state.config.env, &counts, state.config.seed)?;
        for (w, s) in workers.iter_mut().zip(state.workers) {
            w.restore(s)?;
        }
        if params.shape().hidden != state.config.hidden || params.len() != state.adam.m.len() {
            return Err(Error::Checkpoint("weights do not match the trainer configuration".into()));
        }
        Ok(Trainer {
            cfg: state.config,
            scenario,
            channel,
            source,
            params,
            adam: state.adam,
            norm: state.norm,
            workers,
            round: state.round,
            samples_seen: state.samples_seen,
            curve: state.curve,
            update_rng: state.update_rng,
            bad_rounds: state.bad_rounds,
        })
    }

    pub fn load_checkpoint(path: impl AsRef<Path>, source: MobilitySource) -> Result<Trainer> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_checkpoint(std::io::BufReader::new(f), source)
    }
}

fn parse<R: Read>(mut r: R) -> Result<(PolicyParams, State)> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| Error::io("<checkpoint>", e))?;
    let trunc = || Error::Checkpoint("checkpoint file is truncated".into());
    if buf.len() < 8 || &buf[..4] != CHECKPOINT_MAGIC {
        return Err(if buf.len() < 8 && buf.starts_with(&CHECKPOINT_MAGIC[..buf.len().min(4)]) {
            trunc()
        } else {
            Error::Checkpoint("not a checkpoint file".into())
        });
    }
    let version = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {version} is not supported (expected {CHECKPOINT_VERSION})"
        )));
    }
    let mut pos = 8;
    let section = |pos: &mut usize| -> Result<&[u8]> {
        let len_end = pos.checked_add(8).filter(|&e| e <= buf.len()).ok_or_else(trunc)?;
        let len = u64::from_le_bytes(buf[*pos..len_end].try_into().expect("8 bytes")) as usize;
        let end = len_end.checked_add(len).filter(|&e| e <= buf.len()).ok_or_else(trunc)?;
        *pos = end;
        Ok(&buf[len_end..end])
    };
    let params = read_weights(section(&mut pos)?)?;
    let state: State = serde_json::from_slice(section(&mut pos)?)?;
    if pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes after checkpoint".into()));
    }
    Ok((params, state))
}

/// The parts of a checkpoint needed to deploy its policy.
#[derive(Debug, Clone)]
pub struct CheckpointInfo {
    pub params: PolicyParams,
    pub config: TrainerConfig,
    pub scenario: ScenarioConfig,
    pub mobility: MobilityModel,
    pub round: u64,
    pub samples_seen: u64,
}

pub fn read_checkpoint_info(path: impl AsRef<Path>) -> Result<CheckpointInfo> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let (params, state) = parse(std::io::BufReader::new(f))?;
    state.scenario.validate()?;
    Ok(CheckpointInfo {
        params,
        config: state.config,
        scenario: state.scenario,
        mobility: state.mobility,
        round: state.round,
        samples_seen: state.samples_seen,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::ScenarioConfig;

    fn trainer(k: usize) -> Trainer {
        let sc = ScenarioConfig::desk();
        let mut src = MobilitySource::new(MobilityModel::Rwp { v_range: (1.0, 15.0) }, sc.bbox());
        src.lifetime = (5.0, 30.0);
        let mut cfg = TrainerConfig::for_scenario(&sc);
        cfg.hidden = 8;
        cfg.rollout_length = 4;
        cfg.parallel_envs = k;
        cfg.sample_budget = 10_000;
        cfg.ppo.epochs = 1;
        Trainer::new(cfg, sc, src).unwrap()
    }

    #[test]
    fn restore_continues_bit_exactly() {
        let mut t = trainer(2);
        t.train_round().unwrap();
        let mut bytes = Vec::new();
        t.write_checkpoint(&mut bytes).unwrap();
        let mut u = Trainer::read_checkpoint(bytes.as_slice(), t.source.clone()).unwrap();
        for _ in 0..2 {
            let (pa, _, ba) = t.train_round().unwrap();
            let (pb, _, bb) = u.train_round().unwrap();
            assert_eq!(ba, bb);
            assert_eq!(pa, pb);
        }
        assert_eq!(t.params, u.params);
    }

    #[test]
    fn truncated_and_foreign_files_fail_cleanly() {
        let t = trainer(1);
        let mut bytes = Vec::new();
        t.write_checkpoint(&mut bytes).unwrap();
        for cut in [3, 10, 100, bytes.len() - 1] {
            let r = Trainer::read_checkpoint(&bytes[..cut], t.source.clone());
            assert!(matches!(r, Err(Error::Checkpoint(_))), "cut {cut}");
        }
        let mut v = bytes.clone();
        v[4] = 7;
        let r = Trainer::read_checkpoint(v.as_slice(), t.source.clone());
        assert!(matches!(r, Err(Error::Checkpoint(m)) if m.contains("version")));
    }

    #[test]
    fn size_grows_linearly_with_envs() {
        let size = |k| {
            let mut b = Vec::new();
            trainer(k).write_checkpoint(&mut b).unwrap();
            b.len() as f64
        };
        let (s1, s2, s4) = (size(1), size(2), size(4));
        let per = s2 - s1;
        assert!(per > 0.0);
        assert!(((s4 - s2) / (2.0 * per) - 1.0).abs() < 0.5);
    }
}
