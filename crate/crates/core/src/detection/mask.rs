use rand::Rng;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geom::{GridGeometry, Vec2};
use crate::imageio;

/// Transmittance map of the object, one value in `[0, 1]` per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    pub geometry: GridGeometry,
    pub transmittance: Vec<f64>,
}

impl ObjectMask {
    pub fn new(geometry: GridGeometry, transmittance: Vec<f64>) -> Result<Self> {
        if geometry.is_empty() || transmittance.len() != geometry.len() {
            return Err(Error::config(
                "mask",
                "grid must be non-empty and match its geometry",
            ));
        }
        if !(geometry.pitch.is_finite() && geometry.pitch > 0.0) {
            return Err(Error::config("mask.pitch", "must be > 0"));
        }
        if transmittance.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::config("mask", "transmittance outside [0, 1]"));
        }
        Ok(ObjectMask {
            geometry,
            transmittance,
        })
    }

    /// Fully transmitting mask over `geometry`.
    pub fn open(geometry: GridGeometry) -> Self {
        ObjectMask {
            transmittance: vec![1.0; geometry.len()],
            geometry,
        }
    }

    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.transmittance[row * self.geometry.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.transmittance.iter().sum::<f64>() / self.transmittance.len() as f64
    }

    pub fn max(&self) -> f64 {
        self.transmittance.iter().copied().fold(0.0, f64::max)
    }

    /// Bilinear transmittance between cell centers, clamped to the outer
    /// centers near the border. `None` outside the grid.
    pub fn bilinear(&self, p: Vec2) -> Option<f64> {
        let g = &self.geometry;
        let (cx, cy) = g.to_cell(p);
        if !(cx >= 0.0 && cy >= 0.0 && cx < g.width as f64 && cy < g.height as f64) {
            return None;
        }
        let (c0, fx) = lerp_index(cx - 0.5, g.width);
        let (r0, fy) = lerp_index(cy - 0.5, g.height);
        let c1 = (c0 + 1).min(g.width - 1);
        let r1 = (r0 + 1).min(g.height - 1);
        let top = self.at(c0, r0) * (1.0 - fx) + self.at(c1, r0) * fx;
        let bottom = self.at(c0, r1) * (1.0 - fx) + self.at(c1, r1) * fx;
        Some(top * (1.0 - fy) + bottom * fy)
    }

    /// Probability that a photon from an isotropic Gaussian of per-axis
    /// stdev `sigma` centered on the axis is transmitted, by midpoint
    /// quadrature with `sub x sub` points per cell.
    pub fn gaussian_weighted_transmission(&self, sigma: f64, sub: usize) -> f64 {
        let g = &self.geometry;
        let sub = sub.max(1);
        let h = g.pitch / sub as f64;
        let norm = h * h / (2.0 * std::f64::consts::PI * sigma * sigma);
        let (lo, _) = g.bounds();
        let mut acc = 0.0;
        for j in 0..g.height * sub {
            let y = lo.y + (j as f64 + 0.5) * h;
            for i in 0..g.width * sub {
                let x = lo.x + (i as f64 + 0.5) * h;
                let p = Vec2::new(x, y);
                let t = self.bilinear(p).unwrap_or(0.0);
                if t > 0.0 {
                    acc += t * (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        acc * norm
    }
}

fn lerp_index(u: f64, n: usize) -> (usize, f64) {
    if u <= 0.0 {
        (0, 0.0)
    } else if u >= (n - 1) as f64 {
        (n - 1, 0.0)
    } else {
        let i = u.floor();
        (i as usize, u - i)
    }
}

/// Centered circular aperture; edge cells carry their covered area fraction.
pub fn make_pinhole_mask(diameter: f64, pitch: f64, width: usize, height: usize) -> Result<ObjectMask> {
    if !(diameter.is_finite() && diameter > 0.0) {
        return Err(Error::config("mask.pinhole_diameter", "must be > 0"));
    }
    if !(pitch.is_finite() && pitch > 0.0) {
        return Err(Error::config("mask.pitch", "must be > 0"));
    }
    if width == 0 || height == 0 {
        return Err(Error::config("mask.grid", "grid must be non-empty"));
    }
    let geometry = GridGeometry::new(width, height, pitch);
    if diameter > width.min(height) as f64 * pitch {
        return Err(Error::config(
            "mask.pinhole_diameter",
            format!("{diameter} m does not fit in a {width}x{height} grid of pitch {pitch} m"),
        ));
    }
    const SUB: usize = 32;
    let r2 = (diameter / 2.0).powi(2);
    let h = pitch / SUB as f64;
    let mut t = vec![0.0; geometry.len()];
    for row in 0..height {
        for col in 0..width {
            let c = geometry.cell_center(col, row);
            let half = pitch / 2.0;
            let near = (c.x.abs() - half).max(0.0).powi(2) + (c.y.abs() - half).max(0.0).powi(2);
            let far = (c.x.abs() + half).powi(2) + (c.y.abs() + half).powi(2);
            t[row * width + col] = if far <= r2 {
                1.0
            } else if near >= r2 {
                0.0
            } else {
                let mut inside = 0usize;
                for j in 0..SUB {
                    let y = c.y - half + (j as f64 + 0.5) * h;
                    for i in 0..SUB {
                        let x = c.x - half + (i as f64 + 0.5) * h;
                        if x * x + y * y <= r2 {
                            inside += 1;
                        }
                    }
                }
                inside as f64 / (SUB * SUB) as f64
            };
        }
    }
    ObjectMask::new(geometry, t)
}

/// Loads a grayscale bitmap as a mask: transmittance = sample / maxval,
/// grid centered on the optical axis.
pub fn load_mask(path: &Path, pitch: f64) -> Result<ObjectMask> {
    if !(pitch.is_finite() && pitch > 0.0) {
        return Err(Error::config("mask.pitch", "must be > 0"));
    }
    let img = imageio::read_gray(path)?;
    mask_from_gray(&img, pitch)
}

pub(crate) fn mask_from_gray(img: &imageio::GrayImage, pitch: f64) -> Result<ObjectMask> {
    let max = img.maxval as f64;
    let t = img.data.iter().map(|&v| v as f64 / max).collect();
    ObjectMask::new(GridGeometry::new(img.width, img.height, pitch), t)
}

/// Bernoulli pass through the mask at `rho`; positions off the grid are blocked.
pub fn mask_transmit<R: Rng + ?Sized>(mask: &ObjectMask, rho: Vec2, rng: &mut R) -> bool {
    match mask.bilinear(rho) {
        Some(p) => rng.random::<f64>() < p,
        None => false,
    }
}
