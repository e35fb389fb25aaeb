//! Metrics computed from reconstructed ghost images.

use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf_inv, erfc};
use std::f64::consts::{PI, SQRT_2};

use crate::acquisition::{ExperimentConfig, RunStats};
use crate::detection::ObjectMask;
use crate::error::{Error, Result};
use crate::geom::{GridGeometry, Vec2};
use crate::optics::OpticalPath;
use crate::reconstruction::GhostImage;
use crate::spdc::{epr_variance_product, PlaneConfig, SpdcParams, EPR_BOUND};

/// Edge-response width in units of the PSF standard deviation.
pub const EDGE_WIDTH_IN_SIGMA: f64 = 2.56;

/// Michelson contrast `(mb - md) / (mb + md)` of the mean counts in two
/// disjoint pixel sets (row-major indices).
pub fn contrast(image: &GhostImage, bright: &[usize], dark: &[usize]) -> Result<f64> {
    if bright.is_empty() || dark.is_empty() {
        return Err(Error::Domain("contrast regions must be non-empty".into()));
    }
    let n = image.counts.len();
    let mut seen = vec![false; n];
    for &i in bright {
        if i >= n {
            return Err(Error::Domain(format!("bright pixel {i} outside the image")));
        }
        seen[i] = true;
    }
    for &i in dark {
        if i >= n {
            return Err(Error::Domain(format!("dark pixel {i} outside the image")));
        }
        if seen[i] {
            return Err(Error::Domain("contrast regions overlap".into()));
        }
    }
    let mean = |idx: &[usize]| idx.iter().map(|&i| image.counts[i] as f64).sum::<f64>() / idx.len() as f64;
    let (mb, md) = (mean(bright), mean(dark));
    if mb + md == 0.0 {
        return Err(Error::Metric("contrast undefined: both regions are empty of counts".into()));
    }
    Ok((mb - md) / (mb + md))
}

/// Sensor-pixel classification by the mask cell each pixel images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelClass {
    Bright,
    Dark,
    /// Images a point outside the mask.
    Outside,
}

/// Where each sensor pixel lands on the mask.
#[derive(Debug, Clone)]
pub struct MaskProjection {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<PixelClass>,
}

impl MaskProjection {
    /// Projects the mask onto the sensor. A sensor position `s` images the
    /// object point `s * corr * orient / M`; cells with transmittance of at
    /// least one half are bright.
    pub fn new(mask: &ObjectMask, sensor: &GridGeometry, path: &OpticalPath, plane: PlaneConfig) -> Self {
        let sign = plane.correlation_sign().value() * path.orientation_sign.value();
        let scale = sign / path.magnification;
        let mut classes = Vec::with_capacity(sensor.len());
        for r in 0..sensor.height {
            for c in 0..sensor.width {
                let s = sensor.cell_center(c, r);
                let obj = Vec2::new(s.x * scale, s.y * scale);
                classes.push(match mask.geometry.locate(obj) {
                    Some((mc, mr)) if mask.at(mc, mr) >= 0.5 => PixelClass::Bright,
                    Some(_) => PixelClass::Dark,
                    None => PixelClass::Outside,
                });
            }
        }
        MaskProjection {
            width: sensor.width,
            height: sensor.height,
            classes,
        }
    }

    fn is_bright(&self, col: usize, row: usize) -> bool {
        self.classes[row * self.width + col] == PixelClass::Bright
    }

    /// Bright and dark pixel sets, each eroded by `erosion_px` (square
    /// neighbourhood). Pixels imaging points outside the mask count as dark
    /// for the erosion but never join the dark set.
    pub fn contrast_regions(&self, erosion_px: usize) -> (Vec<usize>, Vec<usize>) {
        let bright: Vec<bool> = self.classes.iter().map(|&c| c == PixelClass::Bright).collect();
        let not_bright: Vec<bool> = bright.iter().map(|b| !b).collect();
        let keep_bright = erode(&bright, self.width, self.height, erosion_px);
        let keep_dark = erode(&not_bright, self.width, self.height, erosion_px);
        let mut b = Vec::new();
        let mut d = Vec::new();
        for i in 0..self.classes.len() {
            if keep_bright[i] {
                b.push(i);
            } else if keep_dark[i] && self.classes[i] == PixelClass::Dark {
                d.push(i);
            }
        }
        (b, d)
    }

    /// Longest straight bright/dark boundary whose normal lies along `axis`,
    /// with a band of up to `band_len` lines and a profile window reaching
    /// at most `half_window` pixels into each plateau.
    pub fn find_edge_band(&self, axis: Axis, band_len: usize, half_window: usize) -> Result<PsfBand> {
        // (u, v): u runs along the profile, v along the edge
        let (nu, nv) = match axis {
            Axis::X => (self.width, self.height),
            Axis::Y => (self.height, self.width),
        };
        let bright = |u: usize, v: usize| match axis {
            Axis::X => self.is_bright(u, v),
            Axis::Y => self.is_bright(v, u),
        };
        // (run length, boundary u, first v)
        let mut best: Option<(usize, usize, usize)> = None;
        for u in 0..nu.saturating_sub(1) {
            let mut run = 0usize;
            let mut run_start = 0usize;
            let mut run_kind = false;
            for v in 0..=nv {
                let edge = v < nv && bright(u, v) != bright(u + 1, v);
                let kind = v < nv && bright(u, v);
                if edge && run > 0 && kind == run_kind {
                    run += 1;
                } else {
                    if run > 0 && best.is_none_or(|b| run > b.0) {
                        best = Some((run, u, run_start));
                    }
                    if edge {
                        run = 1;
                        run_start = v;
                        run_kind = kind;
                    } else {
                        run = 0;
                    }
                }
            }
        }
        let (run, u, v0) = best.ok_or_else(|| Error::Metric(format!("mask has no edge along {axis:?}")))?;
        let lines = run.min(band_len);
        if lines < 8 {
            return Err(Error::Metric(format!(
                "longest straight edge along {axis:?} spans only {run} lines"
            )));
        }
        let start = v0 + (run - lines) / 2;
        let band = start..start + lines;
        let extent = |from: usize, step: isize| {
            let side = bright(from, start);
            let mut n = 0usize;
            let mut pos = from as isize;
            while n < half_window && pos >= 0 && (pos as usize) < nu && band.clone().all(|v| bright(pos as usize, v) == side) {
                n += 1;
                pos += step;
            }
            n
        };
        let below = extent(u, -1);
        let above = extent(u + 1, 1);
        Ok(PsfBand {
            axis,
            band,
            window: (u + 1 - below)..(u + 1 + above),
        })
    }
}

/// Square-neighbourhood erosion of a boolean image.
fn erode(src: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return src.to_vec();
    }
    let mut rows = vec![false; src.len()];
    for r in 0..height {
        for c in 0..width {
            let lo = c.saturating_sub(radius);
            let hi = (c + radius).min(width - 1);
            rows[r * width + c] = (lo..=hi).all(|k| src[r * width + k]);
        }
    }
    let mut out = vec![false; src.len()];
    for r in 0..height {
        let lo = r.saturating_sub(radius);
        let hi = (r + radius).min(height - 1);
        for c in 0..width {
            out[r * width + c] = (lo..=hi).all(|k| rows[k * width + c]);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Profile along columns (vertical edge).
    X,
    /// Profile along rows (horizontal edge).
    Y,
}

/// Image region averaged into an edge profile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PsfBand {
    pub axis: Axis,
    /// Lines (rows for `X`, columns for `Y`) averaged together.
    pub band: std::ops::Range<usize>,
    /// Pixel range along the profile.
    pub window: std::ops::Range<usize>,
}

/// Averages the band of `image` into a profile ordered along the axis.
pub fn band_profile(image: &GhostImage, band: &PsfBand) -> Result<Vec<f64>> {
    let (nu, nv) = match band.axis {
        Axis::X => (image.width, image.height),
        Axis::Y => (image.height, image.width),
    };
    if band.band.is_empty() || band.window.len() < 2 || band.band.end > nv || band.window.end > nu {
        return Err(Error::Domain(format!("band {band:?} does not fit the image")));
    }
    Ok(band
        .window
        .clone()
        .map(|u| {
            let sum: f64 = band
                .band
                .clone()
                .map(|v| match band.axis {
                    Axis::X => image.get(u, v),
                    Axis::Y => image.get(v, u),
                } as f64)
                .sum();
            sum / band.band.len() as f64
        })
        .collect())
}

/// Distance in samples between the 90% and 10% crossings of an edge
/// profile. Levels are taken between the profile minimum and maximum; the
/// edge is followed from the maximum towards the darker end.
pub fn edge_transition_width(profile: &[f64]) -> Result<f64> {
    if profile.len() < 2 {
        return Err(Error::Metric("edge profile needs at least two samples".into()));
    }
    let n = profile.len();
    let head: f64 = profile[..n / 2].iter().sum::<f64>() / (n / 2) as f64;
    let tail: f64 = profile[n - n / 2..].iter().sum::<f64>() / (n / 2) as f64;
    let p: Vec<f64> = if head >= tail {
        profile.to_vec()
    } else {
        profile.iter().rev().copied().collect()
    };
    let (m, top) = p
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let base = p.iter().copied().fold(f64::INFINITY, f64::min);
    if top.is_nan() || base.is_nan() || top <= base {
        return Err(Error::Metric("edge profile is flat".into()));
    }
    let l90 = base + 0.9 * (top - base);
    let l10 = base + 0.1 * (top - base);
    let k = (m + 1..n)
        .find(|&i| p[i] <= l10)
        .ok_or_else(|| Error::Metric("edge profile never falls to 10% after its maximum".into()))?;
    let j = (m..k).rev().find(|&i| p[i] >= l90).unwrap_or(m);
    let x90 = j as f64 + (p[j] - l90) / (p[j] - p[j + 1]);
    let q = (j + 1..=k).find(|&i| p[i] <= l10).unwrap_or(k);
    let x10 = (q - 1) as f64 + (p[q - 1] - l10) / (p[q - 1] - p[q]);
    Ok((x10 - x90).max(0.0))
}

/// PSF standard deviation from the 90-10 width of a banded edge profile.
pub fn edge_psf_sigma(image: &GhostImage, band: &PsfBand, pixel_pitch: f64) -> Result<f64> {
    edge_psf_sigma_with(image, band, pixel_pitch, EdgeEstimator::Crossing)
}

pub fn edge_psf_sigma_with(
    image: &GhostImage,
    band: &PsfBand,
    pixel_pitch: f64,
    estimator: EdgeEstimator,
) -> Result<f64> {
    let profile = band_profile(image, band)?;
    let w = match estimator {
        EdgeEstimator::Crossing => edge_transition_width(&profile),
        EdgeEstimator::Fit => fit_edge(&profile).map(|f| f.transition_width()),
    }
    .map_err(|e| Error::Metric(format!("{:?} edge at {:?}: {e}", band.axis, band.window)))?;
    Ok(w / EDGE_WIDTH_IN_SIGMA * pixel_pitch)
}

/// Where the 90% and 10% crossings are read off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum EdgeEstimator {
    /// Directly on the sampled profile.
    Crossing,
    /// On a least-squares error-function model of the profile; robust to
    /// the shot noise of sparse photon-counting images.
    #[default]
    Fit,
}

/// `base + (top - base) * erfc((x - center) / (sqrt 2 sigma)) / 2`, with
/// `x` in samples and the bright side first.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFit {
    pub top: f64,
    pub base: f64,
    pub center: f64,
    pub sigma: f64,
}

impl EdgeFit {
    pub fn eval(&self, x: f64) -> f64 {
        let z = (x - self.center) / (SQRT_2 * self.sigma);
        self.base + (self.top - self.base) * 0.5 * erfc(z)
    }

    /// Distance between the model's 90% and 10% points.
    pub fn transition_width(&self) -> f64 {
        2.0 * SQRT_2 * erf_inv(0.8) * self.sigma
    }
}

/// Levenberg-Marquardt fit of an error-function edge. A profile that is
/// brighter at its end is fitted mirrored; the width is unaffected.
pub fn fit_edge(profile: &[f64]) -> Result<EdgeFit> {
    let n = profile.len();
    if n < 5 {
        return Err(Error::Metric("edge profile needs at least five samples".into()));
    }
    let head: f64 = profile[..n / 2].iter().sum::<f64>() / (n / 2) as f64;
    let tail: f64 = profile[n - n / 2..].iter().sum::<f64>() / (n / 2) as f64;
    let p: Vec<f64> = if head >= tail {
        profile.to_vec()
    } else {
        profile.iter().rev().copied().collect()
    };
    let q = (n / 4).max(1);
    let top0 = p[..q].iter().sum::<f64>() / q as f64;
    let base0 = p[n - q..].iter().sum::<f64>() / q as f64;
    if top0.is_nan() || base0.is_nan() || top0 <= base0 {
        return Err(Error::Metric("edge profile shows no bright-to-dark transition".into()));
    }
    let mid = 0.5 * (top0 + base0);
    let center0 = (0..n - 1)
        .find(|&i| p[i] >= mid && p[i + 1] < mid)
        .map(|i| i as f64 + (p[i] - mid) / (p[i] - p[i + 1]))
        .unwrap_or(n as f64 / 2.0);
    let mut fit = EdgeFit {
        top: top0,
        base: base0,
        center: center0,
        sigma: (n as f64 / 10.0).max(1.0),
    };
    let sse = |f: &EdgeFit| p.iter().enumerate().map(|(i, &v)| (v - f.eval(i as f64)).powi(2)).sum::<f64>();
    let mut err = sse(&fit);
    let mut lambda = 1e-3;
    for _ in 0..200 {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (i, &v) in p.iter().enumerate() {
            let z = (i as f64 - fit.center) / (SQRT_2 * fit.sigma);
            let e = 0.5 * erfc(z);
            let g = (-z * z).exp() / PI.sqrt() * (fit.top - fit.base);
            let j = [e, 1.0 - e, g / (SQRT_2 * fit.sigma), g * z / fit.sigma];
            let r = v - fit.eval(i as f64);
            for a in 0..4 {
                jtr[a] += j[a] * r;
                for b in 0..4 {
                    jtj[a][b] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj;
            for (a, row) in m.iter_mut().enumerate() {
                row[a] += lambda * jtj[a][a].max(1e-12);
            }
            let Some(d) = solve4(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = EdgeFit {
                top: fit.top + d[0],
                base: fit.base + d[1],
                center: fit.center + d[2],
                sigma: (fit.sigma + d[3]).max(1e-3),
            };
            let e = sse(&trial);
            if e < err {
                let step = (d[2].abs() + d[3].abs()) / fit.sigma;
                fit = trial;
                err = e;
                lambda = (lambda / 10.0).max(1e-12);
                improved = step > 1e-10;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if fit.top.is_nan() || fit.base.is_nan() || fit.top <= fit.base || !fit.sigma.is_finite() || fit.center < 0.0 || fit.center > (n - 1) as f64 {
        return Err(Error::Metric("error-function fit did not locate an edge inside the window".into()));
    }
    Ok(fit)
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut m: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for c in 0..4 {
        let piv = (c..4).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs()))?;
        if m[piv][c].abs() < 1e-300 {
            return None;
        }
        m.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..4 {
            let f = m[r][c] / m[c][c];
            let pivot = m[c];
            for (v, p) in m[r].iter_mut().zip(pivot).skip(c) {
                *v -= f * p;
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|k| m[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / m[r][r];
    }
    Some(x)
}

/// Count-weighted per-axis standard deviation (m) of the spot around the
/// brightest pixel, using a square window of `half_window` pixels.
pub fn spot_width(image: &GhostImage, half_window: usize, pixel_pitch: f64) -> Result<(f64, f64)> {
    let (peak, &max) = image
        .counts
        .iter()
        .enumerate()
        .max_by_key(|&(i, &v)| (v, std::cmp::Reverse(i)))
        .ok_or_else(|| Error::Metric("empty image".into()))?;
    if max == 0 {
        return Err(Error::Metric("spot width undefined for an image without counts".into()));
    }
    let mut center = ((peak % image.width) as f64, (peak / image.width) as f64);
    let mut moments = (0.0, 0.0, 0.0);
    for _ in 0..2 {
        let c0 = (center.0.round() as usize).saturating_sub(half_window);
        let r0 = (center.1.round() as usize).saturating_sub(half_window);
        let c1 = (center.0.round() as usize + half_window).min(image.width - 1);
        let r1 = (center.1.round() as usize + half_window).min(image.height - 1);
        let pixels = || (r0..=r1).flat_map(move |r| (c0..=c1).map(move |c| (c, r)));
        let total: f64 = pixels().map(|(c, r)| image.get(c, r) as f64).sum();
        let mx = pixels().map(|(c, r)| image.get(c, r) as f64 * c as f64).sum::<f64>() / total;
        let my = pixels().map(|(c, r)| image.get(c, r) as f64 * r as f64).sum::<f64>() / total;
        let vx = pixels().map(|(c, r)| image.get(c, r) as f64 * (c as f64 - mx).powi(2)).sum::<f64>() / total;
        let vy = pixels().map(|(c, r)| image.get(c, r) as f64 * (r as f64 - my).powi(2)).sum::<f64>() / total;
        center = (mx, my);
        moments = (total, vx, vy);
    }
    Ok((moments.1.sqrt() * pixel_pitch, moments.2.sqrt() * pixel_pitch))
}

/// Count-weighted standard deviation about the centroid, per axis,
/// averaged over both axes.
pub fn field_width(image: &GhostImage, pixel_pitch: f64) -> Result<f64> {
    let total = image.total() as f64;
    if total == 0.0 {
        return Err(Error::Metric("field width undefined for an image without counts".into()));
    }
    let (mut sx, mut sy) = (0.0, 0.0);
    for r in 0..image.height {
        for c in 0..image.width {
            let w = image.get(c, r) as f64;
            sx += w * c as f64;
            sy += w * r as f64;
        }
    }
    let (mx, my) = (sx / total, sy / total);
    let (mut vx, mut vy) = (0.0, 0.0);
    for r in 0..image.height {
        for c in 0..image.width {
            let w = image.get(c, r) as f64;
            vx += w * (c as f64 - mx).powi(2);
            vy += w * (r as f64 - my).powi(2);
        }
    }
    Ok(((vx / total).sqrt() + (vy / total).sqrt()) / 2.0 * pixel_pitch)
}

/// `(modes, bits)` with `modes = (gamma / sigma)^2`.
pub fn mode_count(gamma: f64, sigma: f64) -> Result<(f64, f64)> {
    for (name, v) in [("field width", gamma), ("correlation width", sigma)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::Domain(format!("{name} must be > 0, got {v}")));
        }
    }
    let modes = (gamma / sigma).powi(2);
    Ok((modes, modes.log2()))
}

pub fn heralding_efficiency(stats: &RunStats) -> Result<f64> {
    if stats.total_triggers == 0 {
        return Err(Error::Metric("heralding efficiency undefined without triggers".into()));
    }
    Ok(stats.total_detected_photons as f64 / stats.total_triggers as f64)
}

/// Variance product (units of hbar^2) and whether it violates the bound.
pub fn epr_report(psf_pos: f64, psf_mom: f64, params: &SpdcParams) -> Result<(f64, bool)> {
    let v = epr_variance_product(
        psf_pos,
        psf_mom,
        params.magnification,
        params.effective_focal_length,
        params.lambda_down,
    )?;
    Ok((v, v < EPR_BOUND))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub contrast: Option<f64>,
    pub psf_sigma_x: Option<f64>,
    pub psf_sigma_y: Option<f64>,
    pub field_width_gamma: Option<f64>,
    pub mode_count: Option<f64>,
    pub bits_per_photon: Option<f64>,
    pub heralding_efficiency: Option<f64>,
    pub variance_product_hbar2: Option<f64>,
    pub epr_violation: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PsfMode {
    /// 90-10 width of the longest straight mask edge.
    #[default]
    Edge,
    /// Count-weighted spread of a single spot (pinhole masks).
    Spot,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisSettings {
    pub psf_mode: PsfMode,
    pub edge_estimator: EdgeEstimator,
    pub erosion_px: usize,
    pub band_lines: usize,
    pub half_window_px: usize,
    /// Correlation width measured in the other configuration, for the
    /// variance product.
    pub partner_psf_sigma: Option<f64>,
    /// Frames of the unobstructed-beam run used for the field width.
    pub field_frames: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            psf_mode: PsfMode::Edge,
            edge_estimator: EdgeEstimator::Fit,
            erosion_px: 3,
            band_lines: 30,
            half_window_px: 40,
            partner_psf_sigma: None,
            field_frames: 200,
        }
    }
}

/// Unmet metrics are `None`; the reasons are returned alongside.
pub fn compute_metrics(
    ghost: &GhostImage,
    field: Option<&GhostImage>,
    stats: Option<&RunStats>,
    cfg: &ExperimentConfig,
    settings: &AnalysisSettings,
) -> (MetricsReport, Vec<String>) {
    let mut notes = Vec::new();
    let mut keep = |name: &str, r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(format!("{name}: {e}"));
            None
        }
    };
    let pitch = cfg.iccd.pixel_pitch / cfg.path.magnification;
    let projection = MaskProjection::new(&cfg.mask, &cfg.iccd.geometry(), &cfg.path, cfg.plane);

    let (bright, dark) = projection.contrast_regions(settings.erosion_px);
    let contrast = keep("contrast", contrast(ghost, &bright, &dark));

    let (psf_sigma_x, psf_sigma_y) = match settings.psf_mode {
        PsfMode::Edge => {
            let edge = |axis| {
                projection
                    .find_edge_band(axis, settings.band_lines, settings.half_window_px)
                    .and_then(|band| edge_psf_sigma_with(ghost, &band, pitch, settings.edge_estimator))
            };
            let (x, y) = (edge(Axis::X), edge(Axis::Y));
            (keep("psf_sigma_x", x), keep("psf_sigma_y", y))
        }
        PsfMode::Spot => match spot_width(ghost, settings.half_window_px, pitch) {
            Ok((x, y)) => (Some(x), Some(y)),
            Err(e) => {
                keep("psf_sigma", Err(e));
                (None, None)
            }
        },
    };
    let psf = match (psf_sigma_x, psf_sigma_y) {
        (Some(x), Some(y)) => Some((x + y) / 2.0),
        (a, b) => a.or(b),
    };

    let field_width_gamma = match field {
        Some(img) => keep("field_width_gamma", field_width(img, pitch)),
        None => None,
    };
    let (mode_count, bits_per_photon) = match (field_width_gamma, psf) {
        (Some(g), Some(s)) => match mode_count(g, s) {
            Ok((m, b)) => (Some(m), Some(b)),
            Err(e) => {
                keep("mode_count", Err(e));
                (None, None)
            }
        },
        _ => (None, None),
    };
    let heralding_efficiency = match stats {
        Some(s) => keep("heralding_efficiency", heralding_efficiency(s)),
        None => None,
    };
    let (variance_product_hbar2, epr_violation) = match (psf, settings.partner_psf_sigma) {
        (Some(own), Some(partner)) => {
            let (pos, mom) = match cfg.plane {
                PlaneConfig::PositionCorrelated => (own, partner),
                PlaneConfig::MomentumAntiCorrelated => (partner, own),
            };
            match epr_report(pos, mom, &cfg.spdc) {
                Ok((v, b)) => (Some(v), Some(b)),
                Err(e) => {
                    keep("variance_product_hbar2", Err(e));
                    (None, None)
                }
            }
        }
        _ => (None, None),
    };
    (
        MetricsReport {
            contrast,
            psf_sigma_x,
            psf_sigma_y,
            field_width_gamma,
            mode_count,
            bits_per_photon,
            heralding_efficiency,
            variance_product_hbar2,
            epr_violation,
        },
        notes,
    )
}
