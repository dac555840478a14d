//! Sum-of-sinusoids shadow fading.
//!
//! Each base station owns `M` sinusoids with equal amplitude
//! `sigma * sqrt(2 / M)`, uniform phases and uniform directions. Wavevector
//! magnitudes are drawn by jittered stratified sampling from the radial
//! spectrum of an exponential autocorrelation `exp(-r / d)`, whose CDF is
//! `F(k) = 1 - 1 / sqrt(1 + (k d)^2)`.

use std::f64::consts::TAU;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::Point;
use crate::rng::{stream_rng, Stream};
use crate::scenario::ShadowingConfig;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sinusoid {
    /// dB
    pub amplitude: f64,
    /// rad/m
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
}

#[derive(Debug, Clone)]
pub struct ShadowField {
    components: Vec<Vec<Sinusoid>>,
    pub sigma_sf: f64,
    pub decorrelation_distance: f64,
}

impl ShadowField {
    pub fn new(cfg: &ShadowingConfig, num_bs: usize, seed: u64) -> Self {
        let m = cfg.sinusoids.max(1);
        let amplitude = cfg.sigma_sf * (2.0 / m as f64).sqrt();
        let d = cfg.decorrelation_distance;
        let components = (0..num_bs)
            .map(|bs| {
                let mut rng = stream_rng(seed, Stream::Shadow, bs as u64);
                (0..m)
                    .map(|i| {
                        let u = (i as f64 + rng.random::<f64>()) / m as f64;
                        let k = ((1.0 - u).powi(-2) - 1.0).max(0.0).sqrt() / d;
                        let dir = rng.random::<f64>() * TAU;
                        let phase = rng.random::<f64>() * TAU;
                        Sinusoid {
                            amplitude,
                            kx: k * dir.cos(),
                            ky: k * dir.sin(),
                            phase,
                        }
                    })
                    .collect()
            })
            .collect();
        ShadowField {
            components,
            sigma_sf: cfg.sigma_sf,
            decorrelation_distance: d,
        }
    }

    pub fn num_base_stations(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self, bs: usize) -> Result<&[Sinusoid]> {
        self.components
            .get(bs)
            .map(Vec::as_slice)
            .ok_or(Error::UnknownBaseStation(bs))
    }

    /// Shadow fading in dB at `p` for base station `bs`.
    pub fn shadow_db(&self, p: Point, bs: usize) -> Result<f64> {
        Ok(eval(self.components(bs)?, p))
    }

    pub(crate) fn shadow_db_unchecked(&self, p: Point, bs: usize) -> f64 {
        eval(&self.components[bs], p)
    }
}

fn eval(comps: &[Sinusoid], p: Point) -> f64 {
    comps
        .iter()
        .map(|s| s.amplitude * (s.kx * p.x + s.ky * p.y + s.phase).cos())
        .sum()
}
