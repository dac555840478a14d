//! Scenario description: area, sites, bands, radio constants, handover
//! model and the reward/mask knobs shared by the environment and agent.

mod layout;

pub use layout::{build_hex_layout, expand_base_stations};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BBox, Point};

/// A carrier: frequency in GHz, bandwidth in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub carrier_frequency: f64,
    pub bandwidth: f64,
}

impl Band {
    pub const fn new(carrier_frequency: f64, bandwidth: f64) -> Self {
        Band {
            carrier_frequency,
            bandwidth,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseStation {
    pub id: usize,
    pub site: usize,
    pub band_index: usize,
    pub site_position: Point,
    pub height: f64,
    pub band: Band,
    /// dBm
    pub tx_power: f64,
}

/// Stochastic handover interruption: success with `success_probability`
/// costs `success_interruption` seconds, failure costs
/// `failure_interruption` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandoverModel {
    pub success_probability: f64,
    pub success_interruption: f64,
    pub failure_interruption: f64,
    pub slot_duration: f64,
}

impl Default for HandoverModel {
    fn default() -> Self {
        HandoverModel {
            success_probability: 0.8,
            success_interruption: 0.020,
            failure_interruption: 0.09076,
            slot_duration: 0.100,
        }
    }
}

/// Spatially consistent log-normal shadowing parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowingConfig {
    /// dB
    pub sigma_sf: f64,
    /// meters
    pub decorrelation_distance: f64,
    pub sinusoids: usize,
}

impl Default for ShadowingConfig {
    fn default() -> Self {
        ShadowingConfig {
            sigma_sf: 6.0,
            decorrelation_distance: 50.0,
            sinusoids: 30,
        }
    }
}

/// Immutable scenario description, serialized as JSON with these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// (width, height), meters
    pub area: (f64, f64),
    pub inter_site_distance: f64,
    pub sites: Vec<Point>,
    pub bands: Vec<Band>,
    /// dBm, every base station
    pub tx_power: f64,
    /// dBi
    pub antenna_gain: f64,
    pub bs_height: f64,
    pub user_height: f64,
    /// dBm/Hz
    pub noise_psd: f64,
    /// seconds
    pub slot_duration: f64,
    pub handover: HandoverModel,
    pub shadowing: ShadowingConfig,
    pub reward_alpha: f64,
    pub mask_top_n: usize,
    pub user_count_range: (usize, usize),
    pub master_seed: u64,
}

impl ScenarioConfig {
    /// The full-scale urban macro scenario: 22 sites x 2 bands on 2 km x 2 km.
    pub fn full() -> Self {
        let area = (2000.0, 2000.0);
        let isd = 500.0;
        ScenarioConfig {
            area,
            inter_site_distance: isd,
            sites: build_hex_layout(area, isd).expect("static layout"),
            bands: vec![Band::new(3.7, 40e6), Band::new(0.7, 10e6)],
            tx_power: 46.0,
            antenna_gain: 0.0,
            bs_height: 25.0,
            user_height: 1.5,
            noise_psd: -174.0,
            slot_duration: 0.100,
            handover: HandoverModel::default(),
            shadowing: ShadowingConfig::default(),
            reward_alpha: 0.5,
            mask_top_n: 8,
            user_count_range: (100, 400),
            master_seed: 0,
        }
    }

    /// Desk-scale preset: the 7-site cluster on 1 km x 1 km, 20-60 users,
    /// same radio constants.
    pub fn desk() -> Self {
        let area = (1000.0, 1000.0);
        let isd = 500.0;
        ScenarioConfig {
            area,
            sites: build_hex_layout(area, isd).expect("static layout"),
            user_count_range: (20, 60),
            ..Self::full()
        }
    }

    pub fn num_base_stations(&self) -> usize {
        self.sites.len() * self.bands.len()
    }

    pub fn bbox(&self) -> BBox {
        BBox::from_area(self.area.0, self.area.1)
    }

    pub fn base_stations(&self) -> Vec<BaseStation> {
        expand_base_stations(&self.sites, &self.bands, self.tx_power, self.bs_height)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let (w, h) = self.area;
        if !(w > 0.0 && h > 0.0) {
            return fail(format!("area must be positive, got {w} x {h}"));
        }
        if self.sites.is_empty() {
            return fail("at least one site required".into());
        }
        if self.bands.is_empty() {
            return fail("at least one band required".into());
        }
        for b in &self.bands {
            if !(b.carrier_frequency > 0.0 && b.bandwidth > 0.0) {
                return fail(format!("band must have positive frequency and bandwidth: {b:?}"));
            }
        }
        if !self.tx_power.is_finite() || !self.noise_psd.is_finite() || !self.antenna_gain.is_finite() {
            return fail("tx_power, antenna_gain and noise_psd must be finite".into());
        }
        if !(self.bs_height > 0.0 && self.user_height > 0.0) {
            return fail("heights must be positive".into());
        }
        if !(self.slot_duration > 0.0) {
            return fail("slot_duration must be positive".into());
        }
        let ho = &self.handover;
        if !(0.0..=1.0).contains(&ho.success_probability) {
            return fail("handover success_probability must lie in [0, 1]".into());
        }
        if ho.slot_duration != self.slot_duration {
            return fail("handover.slot_duration must equal slot_duration".into());
        }
        for t in [ho.success_interruption, ho.failure_interruption] {
            if !(t >= 0.0 && t < ho.slot_duration) {
                return fail(format!("handover interruption {t} s must lie in [0, slot_duration)"));
            }
        }
        if !(self.shadowing.sigma_sf >= 0.0 && self.shadowing.decorrelation_distance > 0.0) {
            return fail("shadowing sigma must be >= 0 and decorrelation distance > 0".into());
        }
        if self.shadowing.sinusoids == 0 {
            return fail("shadowing needs at least one sinusoid".into());
        }
        if !(0.0..=1.0).contains(&self.reward_alpha) {
            return fail(format!("reward_alpha {} outside [0, 1]", self.reward_alpha));
        }
        let nb = self.num_base_stations();
        if self.mask_top_n < 1 || self.mask_top_n > nb {
            return fail(format!("mask_top_n {} outside [1, {nb}]", self.mask_top_n));
        }
        let (lo, hi) = self.user_count_range;
        if lo > hi {
            return fail(format!("user_count_range min {lo} exceeds max {hi}"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
