//! Parametric reading noise.
//!
//! Each raw reading of an echo gets Gaussian jitter, may drop out entirely
//! (outlier: no echo or out of range) and may spike by at least
//! `spike_scale` of its value. All three are scaled by an incidence factor
//! `sec(theta)^incidence_gain`, where `theta` is the angle between the beam
//! and the normal of the surface it hits: oblique reflections return weaker
//! and less reliable echoes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cap on the incidence factor so near-grazing hits stay finite.
const MAX_INCIDENCE_FACTOR: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Standard deviation added to each raw reading.
    pub gaussian_sigma_m: f64,
    /// Probability per raw reading of a dropout.
    pub outlier_prob: f64,
    /// Probability per raw reading of an in-range spike.
    pub spike_prob: f64,
    /// Minimum relative spike size; actual size is uniform in `[s, 2s]`.
    pub spike_scale: f64,
    /// Exponent of the incidence factor; 0 disables angle dependence.
    pub incidence_gain: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseModel {
    pub const fn noiseless() -> Self {
        Self {
            gaussian_sigma_m: 0.0,
            outlier_prob: 0.0,
            spike_prob: 0.0,
            spike_scale: 0.15,
            incidence_gain: 0.0,
            seed: 0,
        }
    }

    /// Stand-in for the real sensor's noise, fitted so single-module
    /// errors approach the prototype measurements. The fit procedure and
    /// its residuals are recorded next to the preset file in the CLI crate.
    pub const fn paper_calibrated() -> Self {
        Self {
            gaussian_sigma_m: 0.03,
            outlier_prob: 0.02,
            spike_prob: 0.03,
            spike_scale: 0.15,
            incidence_gain: 4.0,
            seed: 0,
        }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "noiseless" => Some(Self::noiseless()),
            "paper-calibrated" => Some(Self::paper_calibrated()),
            _ => None,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        if !prob(self.outlier_prob) || !prob(self.spike_prob) {
            return Err(Error::InvalidConfig(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        if !(self.gaussian_sigma_m >= 0.0) {
            return Err(Error::InvalidConfig("gaussian_sigma_m must be >= 0".into()));
        }
        if !(self.spike_scale >= 0.15) {
            return Err(Error::InvalidConfig("spike_scale must be >= 0.15".into()));
        }
        if !(self.incidence_gain >= 0.0) {
            return Err(Error::InvalidConfig("incidence_gain must be >= 0".into()));
        }
        Ok(())
    }

    pub fn is_noiseless(&self) -> bool {
        self.gaussian_sigma_m == 0.0 && self.outlier_prob == 0.0 && self.spike_prob == 0.0
    }

    /// Noise multiplier for a hit at `incidence_rad` from the surface normal.
    pub fn intensity(&self, incidence_rad: f64) -> f64 {
        if self.incidence_gain == 0.0 {
            return 1.0;
        }
        let c = libm::cos(incidence_rad);
        if c <= 0.0 {
            return MAX_INCIDENCE_FACTOR;
        }
        libm::pow(1.0 / c, self.incidence_gain).min(MAX_INCIDENCE_FACTOR)
    }
}
