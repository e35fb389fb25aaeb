//! Plane mapping and coincidence timing.
//!
//! The camera-arm photon must cross the folded delay line while the bucket
//! detector pulse travels through the electronics and the trigger cable. The
//! intensifier only records it when the two arrive within the gate.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::geom::{Sign, Vec2};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Total propagation length of the image-preserving delay line, m.
pub const DELAY_LINE_LENGTH: f64 = 22.0;

/// Camera-arm optics between the sampled plane and the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalPath {
    pub magnification: f64,
    pub orientation_sign: Sign,
    pub optical_delay_s: f64,
    /// Scalar transmission of the delay line and its polarization optics.
    pub transmission: f64,
    /// Extra Gaussian blur (per-axis stdev, m) standing in for defocus and
    /// finite resolving power of the relay optics.
    pub blur_sigma: f64,
}

impl Default for OpticalPath {
    fn default() -> Self {
        OpticalPath {
            magnification: 1.0,
            orientation_sign: Sign::Positive,
            optical_delay_s: DELAY_LINE_LENGTH / SPEED_OF_LIGHT,
            transmission: 0.9,
            blur_sigma: 0.0,
        }
    }
}

impl OpticalPath {
    pub fn validate(&self) -> Result<()> {
        if !(self.magnification.is_finite() && self.magnification > 0.0) {
            return Err(Error::config("path.magnification", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.transmission) {
            return Err(Error::config("path.transmission", "must lie in [0, 1]"));
        }
        if !(self.optical_delay_s.is_finite() && self.optical_delay_s >= 0.0) {
            return Err(Error::config("path.optical_delay_s", "must be >= 0"));
        }
        if !(self.blur_sigma.is_finite() && self.blur_sigma >= 0.0) {
            return Err(Error::config("path.blur_sigma", "must be >= 0"));
        }
        Ok(())
    }

    /// Maps a sampled camera-plane position onto the sensor plane.
    pub fn map<R: Rng + ?Sized>(&self, rho: Vec2, rng: &mut R) -> Vec2 {
        let mut p = orient(rho, self.orientation_sign) * self.magnification;
        if self.blur_sigma > 0.0 {
            p = p + crate::spdc::gaussian_pair(rng) * self.blur_sigma;
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingModel {
    pub electronic_delay_s: f64,
    pub cable_delay_per_m: f64,
    pub cable_length_m: f64,
    pub gate_width_s: f64,
    pub photon_jitter_sigma_s: f64,
}

impl Default for TimingModel {
    /// Defaults with the cable trimmed so the photon lands mid-gate behind
    /// the default delay line.
    fn default() -> Self {
        let mut t = TimingModel {
            electronic_delay_s: 70e-9,
            cable_delay_per_m: 5e-9,
            cable_length_m: 0.0,
            gate_width_s: 5e-9,
            photon_jitter_sigma_s: 0.5e-9,
        };
        t.cable_length_m = t.nominal_cable_length(&OpticalPath::default());
        t
    }
}

impl TimingModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_width_s.is_finite() && self.gate_width_s > 0.0) {
            return Err(Error::config("timing.gate_width_s", "must be > 0"));
        }
        if !(self.cable_delay_per_m.is_finite() && self.cable_delay_per_m > 0.0) {
            return Err(Error::config("timing.cable_delay_per_m", "must be > 0"));
        }
        if !(self.photon_jitter_sigma_s.is_finite() && self.photon_jitter_sigma_s >= 0.0) {
            return Err(Error::config("timing.photon_jitter_sigma_s", "must be >= 0"));
        }
        if !self.electronic_delay_s.is_finite() || !self.cable_length_m.is_finite() {
            return Err(Error::config("timing", "delays must be finite"));
        }
        Ok(())
    }

    /// Cable length that zeroes the timing offset for `path`. May be negative
    /// when the electronics alone are slower than the delay line.
    pub fn nominal_cable_length(&self, path: &OpticalPath) -> f64 {
        (path.optical_delay_s - self.electronic_delay_s) / self.cable_delay_per_m
    }

    /// Probability that a photon with timing offset `delta_t` falls inside
    /// the gate once arrival jitter is included.
    pub fn gate_acceptance_probability(&self, delta_t: f64) -> f64 {
        let half = self.gate_width_s / 2.0;
        if self.photon_jitter_sigma_s == 0.0 {
            return if delta_t.abs() <= half { 1.0 } else { 0.0 };
        }
        let s = self.photon_jitter_sigma_s * std::f64::consts::SQRT_2;
        0.5 * (erf((half - delta_t) / s) - erf((-half - delta_t) / s))
    }
}

pub fn delay_line_optical_delay(length: f64) -> Result<f64> {
    if !(length.is_finite() && length >= 0.0) {
        return Err(Error::Domain(format!(
            "delay line length must be >= 0, got {length}"
        )));
    }
    Ok(length / SPEED_OF_LIGHT)
}

/// Trigger arrival minus photon arrival. Zero centers the photon in the gate.
pub fn net_timing_offset(t: &TimingModel, path: &OpticalPath) -> f64 {
    t.electronic_delay_s + t.cable_delay_per_m * t.cable_length_m - path.optical_delay_s
}

pub fn gate_accepts<R: Rng + ?Sized>(delta_t: f64, t: &TimingModel, rng: &mut R) -> bool {
    let jitter = if t.photon_jitter_sigma_s > 0.0 {
        t.photon_jitter_sigma_s * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    (delta_t + jitter).abs() <= t.gate_width_s / 2.0
}

pub fn orient(rho: Vec2, sign: Sign) -> Vec2 {
    sign.apply(rho)
}
