//! Large-scale channel: pathloss, shadow fading, gains and disturbance.

mod pathloss;
mod shadow;

pub use pathloss::{pathloss_db, MIN_DISTANCE_2D};
pub use shadow::{ShadowField, Sinusoid};

use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::scenario::{BaseStation, ScenarioConfig};

/// Components of one link's gain, all in dB.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub pathloss_db: f64,
    pub shadow_db: f64,
    pub antenna_gain_db: f64,
}

impl LinkBudget {
    /// `10^(-(PL + SF - G) / 10)`
    pub fn gain(&self) -> f64 {
        10f64.powf(-(self.pathloss_db + self.shadow_db - self.antenna_gain_db) / 10.0)
    }
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

/// Scale a linear gain by `1 + u`, `u ~ U[-magnitude, magnitude]`.
///
/// Draws nothing when `magnitude` is zero.
pub fn perturb_gain<R: Rng + ?Sized>(g: f64, magnitude: f64, rng: &mut R) -> f64 {
    debug_assert!((0.0..1.0).contains(&magnitude));
    if magnitude == 0.0 {
        return g;
    }
    g * (1.0 + rng.random_range(-magnitude..=magnitude))
}

/// The wireless channel of a scenario. Pure given its seed; shared
/// read-only across environments.
#[derive(Debug, Clone)]
pub struct Channel {
    bss: Vec<BaseStation>,
    shadow: ShadowField,
    user_height: f64,
    antenna_gain: f64,
    tx_mw: Vec<f64>,
    noise_mw: Vec<f64>,
    num_bands: usize,
}

impl Channel {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let bss = cfg.base_stations();
        let shadow = ShadowField::new(&cfg.shadowing, bss.len(), cfg.master_seed);
        let noise_psd_mw = dbm_to_mw(cfg.noise_psd);
        let tx_mw = bss.iter().map(|b| dbm_to_mw(b.tx_power)).collect();
        let noise_mw = bss.iter().map(|b| b.band.bandwidth * noise_psd_mw).collect();
        Channel {
            bss,
            shadow,
            user_height: cfg.user_height,
            antenna_gain: cfg.antenna_gain,
            tx_mw,
            noise_mw,
            num_bands: cfg.bands.len(),
        }
    }

    pub fn base_stations(&self) -> &[BaseStation] {
        &self.bss
    }

    pub fn num_base_stations(&self) -> usize {
        self.bss.len()
    }

    pub fn num_bands(&self) -> usize {
        self.num_bands
    }

    pub fn shadow_field(&self) -> &ShadowField {
        &self.shadow
    }

    /// Transmit power per BS, mW.
    pub fn tx_power_mw(&self) -> &[f64] {
        &self.tx_mw
    }

    /// Thermal noise `W_j * sigma^2` per BS, mW.
    pub fn noise_mw(&self) -> &[f64] {
        &self.noise_mw
    }

    pub fn link_budget(&self, p: Point, bs: usize) -> Result<LinkBudget> {
        let b = self.bss.get(bs).ok_or(Error::UnknownBaseStation(bs))?;
        Ok(self.budget_unchecked(p, b))
    }

    fn budget_unchecked(&self, p: Point, b: &BaseStation) -> LinkBudget {
        LinkBudget {
            pathloss_db: pathloss_db(
                p.dist(b.site_position),
                b.band.carrier_frequency,
                b.height,
                self.user_height,
            ),
            shadow_db: self.shadow.shadow_db_unchecked(p, b.id),
            antenna_gain_db: self.antenna_gain,
        }
    }

    pub fn channel_gain(&self, p: Point, bs: usize) -> Result<f64> {
        Ok(self.link_budget(p, bs)?.gain())
    }

    /// Gains to every BS, in id order.
    pub fn gains(&self, p: Point) -> Vec<f64> {
        self.bss.iter().map(|b| self.budget_unchecked(p, b).gain()).collect()
    }
}
