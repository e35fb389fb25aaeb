use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::geom::{GridGeometry, Vec2};

/// Intensified CCD: photocathode, gain chain with phosphor blooming, and
/// the read-out of the CCD behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IccdModel {
    pub width: usize,
    pub height: usize,
    /// Sensor pixel pitch, m.
    pub pixel_pitch: f64,
    pub quantum_efficiency: f64,
    /// Stdev of the phosphor splat in pixels.
    pub blooming_sigma_px: f64,
    /// Mean integrated analog counts of one amplified photoelectron.
    pub gain_mean: f64,
    pub gain_sigma: f64,
    /// Mean number of amplified dark/ambient events per frame.
    pub dark_events_per_frame: f64,
    /// Per-pixel additive read noise stdev, analog counts.
    pub read_noise_sigma: f64,
}

impl Default for IccdModel {
    fn default() -> Self {
        IccdModel {
            width: 1280,
            height: 1280,
            pixel_pitch: 13e-6,
            quantum_efficiency: 0.2,
            blooming_sigma_px: 1.2,
            gain_mean: 500.0,
            gain_sigma: 100.0,
            dark_events_per_frame: 0.2,
            read_noise_sigma: 3.0,
        }
    }
}

impl IccdModel {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("iccd.width", "sensor must be non-empty"));
        }
        if !(self.pixel_pitch.is_finite() && self.pixel_pitch > 0.0) {
            return Err(Error::config("iccd.pixel_pitch", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.quantum_efficiency) {
            return Err(Error::config("iccd.quantum_efficiency", "must lie in [0, 1]"));
        }
        for (key, v) in [
            ("iccd.blooming_sigma_px", self.blooming_sigma_px),
            ("iccd.gain_mean", self.gain_mean),
            ("iccd.gain_sigma", self.gain_sigma),
            ("iccd.dark_events_per_frame", self.dark_events_per_frame),
            ("iccd.read_noise_sigma", self.read_noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Sensor pixel grid in the camera plane, centered on the optical axis.
    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.width, self.height, self.pixel_pitch)
    }

    fn draw_gain<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.gain_sigma == 0.0 {
            return self.gain_mean;
        }
        loop {
            let g = self.gain_mean + self.gain_sigma * rng.sample::<f64, _>(StandardNormal);
            if g > 0.0 {
                return g;
            }
        }
    }
}

/// One analog exposure, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f32>,
    pub exposure_s: f64,
}

impl Frame {
    pub fn zeros(width: usize, height: usize, exposure_s: f64) -> Self {
        Frame {
            width,
            height,
            values: vec![0.0; width * height],
            exposure_s,
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum()
    }

    /// Adds a pixel-integrated Gaussian of total `mass` centered at the
    /// continuous pixel coordinate `(cx, cy)`.
    pub fn splat(&mut self, cx: f64, cy: f64, sigma_px: f64, mass: f64) {
        if sigma_px <= 0.0 {
            let (c, r) = (cx.floor(), cy.floor());
            if c >= 0.0 && r >= 0.0 && (c as usize) < self.width && (r as usize) < self.height {
                self.values[r as usize * self.width + c as usize] += mass as f32;
            }
            return;
        }
        let reach = (5.0 * sigma_px).ceil() as isize + 1;
        let wx = axis_weights(cx, sigma_px, reach, self.width);
        let wy = axis_weights(cy, sigma_px, reach, self.height);
        for &(r, fy) in &wy {
            let row = &mut self.values[r * self.width..(r + 1) * self.width];
            for &(c, fx) in &wx {
                row[c] += (mass * fx * fy) as f32;
            }
        }
    }
}

fn axis_weights(center: f64, sigma: f64, reach: isize, len: usize) -> Vec<(usize, f64)> {
    let base = center.floor() as isize;
    let s = sigma * SQRT_2;
    ((base - reach)..=(base + reach))
        .filter(|&i| i >= 0 && (i as usize) < len)
        .map(|i| {
            let lo = (i as f64 - center) / s;
            let hi = (i as f64 + 1.0 - center) / s;
            (i as usize, 0.5 * (erf(hi) - erf(lo)))
        })
        .collect()
}

/// Frame plus the number of amplified events that went into it.
#[derive(Debug, Clone, PartialEq)]
pub struct Exposure {
    pub frame: Frame,
    pub photon_splats: usize,
    pub dark_splats: usize,
}

/// Converts accepted sensor-plane photon positions into photoelectron
/// splats. Photons off the sensor are dropped before the photocathode draw.
/// Returns the number of splats deposited.
pub fn deposit_photons<R: Rng + ?Sized>(
    frame: &mut Frame,
    photons: &[Vec2],
    model: &IccdModel,
    rng: &mut R,
) -> usize {
    let geom = model.geometry();
    let mut splats = 0;
    for &p in photons {
        let (cx, cy) = geom.to_cell(p);
        if !(cx >= 0.0 && cy >= 0.0 && cx < geom.width as f64 && cy < geom.height as f64) {
            continue;
        }
        if rng.random::<f64>() >= model.quantum_efficiency {
            continue;
        }
        let mass = model.draw_gain(rng);
        frame.splat(cx, cy, model.blooming_sigma_px, mass);
        splats += 1;
    }
    splats
}

/// Poisson-distributed amplified dark events at uniform sensor positions.
pub fn deposit_dark_events<R: Rng + ?Sized>(frame: &mut Frame, model: &IccdModel, rng: &mut R) -> usize {
    let n = if model.dark_events_per_frame > 0.0 {
        Poisson::new(model.dark_events_per_frame)
            .map(|d| d.sample(rng) as usize)
            .unwrap_or(0)
    } else {
        0
    };
    for _ in 0..n {
        let cx = rng.random::<f64>() * model.width as f64;
        let cy = rng.random::<f64>() * model.height as f64;
        let mass = model.draw_gain(rng);
        frame.splat(cx, cy, model.blooming_sigma_px, mass);
    }
    n
}

pub fn add_read_noise<R: Rng + ?Sized>(frame: &mut Frame, model: &IccdModel, rng: &mut R) {
    if model.read_noise_sigma == 0.0 {
        return;
    }
    let s = model.read_noise_sigma as f32;
    for v in frame.values.iter_mut() {
        *v += s * rng.sample::<f32, _>(StandardNormal);
    }
}

/// Full exposure on one random stream: photons, then dark events, then read noise.
pub fn iccd_expose<R: Rng + ?Sized>(
    photons: &[Vec2],
    model: &IccdModel,
    exposure_s: f64,
    rng: &mut R,
) -> Exposure {
    let mut frame = Frame::zeros(model.width, model.height, exposure_s);
    let photon_splats = deposit_photons(&mut frame, photons, model, rng);
    let dark_splats = deposit_dark_events(&mut frame, model, rng);
    add_read_noise(&mut frame, model, rng);
    Exposure {
        frame,
        photon_splats,
        dark_splats,
    }
}
