//! Flat `section.key = value` run configuration.
//!
//! Lines hold one assignment each; `#` starts a comment. All quantities
//! are SI. Unknown keys are rejected. A configuration argument names either
//! a file or one of the built-in presets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::acquisition::{calibrate_efficiencies, default_threshold, Calibration, ExperimentConfig, TriggerSampling};
use crate::analysis::{AnalysisSettings, EdgeEstimator, PsfMode};
use crate::detection::{load_mask, make_pinhole_mask, ObjectMask};
use crate::error::{Error, Result};
use crate::geom::{GridGeometry, Sign};
use crate::imageio;
use crate::optics::delay_line_optical_delay;
use crate::spdc::PlaneConfig;

/// Built-in presets as `(name, text)`.
pub const PRESETS: &[(&str, &str)] = &[
    ("position-skull", include_str!("../presets/position-skull.conf")),
    ("momentum-skull", include_str!("../presets/momentum-skull.conf")),
    ("position-pinhole-75um", include_str!("../presets/position-pinhole-75um.conf")),
    ("momentum-pinhole-75um", include_str!("../presets/momentum-pinhole-75um.conf")),
];

/// Bitmaps shipped with the presets, addressed as `builtin:<name>`.
pub const BUILTIN_MASKS: &[(&str, &[u8])] = &[("skull.pgm", include_bytes!("../masks/skull.pgm"))];

/// Heralding efficiency assumed when only a photon target is given.
pub const DEFAULT_TARGET_ETA: f64 = 0.002;

const BUILTIN_PREFIX: &str = "builtin:";

#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    /// Bitmap file, stored as given after resolving against the config directory.
    File(PathBuf),
    Builtin(String),
    /// Centered circular aperture; grid size in cells.
    Pinhole { diameter: f64, width: usize, height: usize },
    /// Fully transmitting grid covering the sensor's field of view.
    Open,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationTargets {
    pub target_photons_per_frame: f64,
    pub target_eta: f64,
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    pub mask_source: MaskSource,
    pub mask_pitch: f64,
    /// Event threshold in analog counts.
    pub threshold: f64,
    pub analysis: AnalysisSettings,
    pub scan_deltas_m: Vec<f64>,
    /// Frames per delay-scan point; the run's frame count when absent.
    pub scan_frames: Option<usize>,
    pub calibration: Option<Calibration>,
    pub calibration_targets: Option<CalibrationTargets>,
}

impl RunConfig {
    /// Resolves `arg` as a file if one exists there, else as a preset name.
    pub fn load(arg: &str) -> Result<RunConfig> {
        let path = Path::new(arg);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            return RunConfig::parse(&text, &base);
        }
        match preset(arg) {
            Some(text) => RunConfig::parse(text, Path::new("")),
            None => Err(Error::config(
                "config",
                format!("`{arg}` is neither a readable file nor a preset ({})", preset_names().join(", ")),
            )),
        }
    }

    /// Parses configuration text; relative mask paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<RunConfig> {
        let mut kv = parse_pairs(text)?;
        let mut take = |key: &str| kv.remove(key);

        let plane: PlaneConfig = match take("run.plane") {
            Some(v) => v.parse().map_err(|e: String| Error::config("run.plane", e))?,
            None => PlaneConfig::PositionCorrelated,
        };
        let mask_pitch = opt_f64(&mut take, "mask.pitch")?.unwrap_or(13e-6);
        let mask_kind = take("mask.kind");
        let mask_path = take("mask.path");
        let diameter = opt_f64(&mut take, "mask.pinhole_diameter")?;
        let grid_w = opt_usize(&mut take, "mask.width")?;
        let grid_h = opt_usize(&mut take, "mask.height")?;
        let mask_source = match mask_kind.as_deref().unwrap_or(if mask_path.is_some() { "file" } else { "open" }) {
            "file" => {
                let p = mask_path.ok_or_else(|| Error::config("mask.path", "required for a file mask"))?;
                match p.strip_prefix(BUILTIN_PREFIX) {
                    Some(name) => MaskSource::Builtin(name.to_string()),
                    None => MaskSource::File(base.join(p)),
                }
            }
            "pinhole" => {
                let d = diameter.ok_or_else(|| Error::config("mask.pinhole_diameter", "required for a pinhole mask"))?;
                if !(d.is_finite() && d > 0.0) {
                    return Err(Error::config("mask.pinhole_diameter", "must be > 0"));
                }
                let side = (d / mask_pitch).ceil() as usize + 2;
                MaskSource::Pinhole {
                    diameter: d,
                    width: grid_w.unwrap_or(side),
                    height: grid_h.unwrap_or(side),
                }
            }
            "open" => MaskSource::Open,
            other => return Err(Error::config("mask.kind", format!("unknown mask kind `{other}` (file, pinhole, open)"))),
        };
        if !matches!(mask_source, MaskSource::Pinhole { .. }) {
            for (key, present) in [("mask.pinhole_diameter", diameter.is_some()), ("mask.width", grid_w.is_some()), ("mask.height", grid_h.is_some())] {
                if present {
                    return Err(Error::config(key, "only valid for pinhole masks"));
                }
            }
        }

        // placeholder mask until the sensor geometry is known
        let mut cfg = ExperimentConfig::new(plane, ObjectMask::open(GridGeometry::new(1, 1, mask_pitch)));
        let e = &mut cfg;
        set_f64(&mut take, "spdc.lambda_pump", &mut e.spdc.lambda_pump)?;
        set_f64(&mut take, "spdc.lambda_down", &mut e.spdc.lambda_down)?;
        set_f64(&mut take, "spdc.crystal_length", &mut e.spdc.crystal_length)?;
        set_f64(&mut take, "spdc.pump_fwhm_intensity", &mut e.spdc.pump_fwhm_intensity)?;
        set_f64(&mut take, "spdc.magnification", &mut e.spdc.magnification)?;
        set_f64(&mut take, "spdc.effective_focal_length", &mut e.spdc.effective_focal_length)?;
        e.state_overrides.gamma_marginal = opt_f64(&mut take, "state.gamma_marginal")?;
        e.state_overrides.sigma_cond = opt_f64(&mut take, "state.sigma_cond")?;

        set_f64(&mut take, "bucket.efficiency", &mut e.bucket.efficiency)?;
        set_f64(&mut take, "bucket.max_trigger_rate_hz", &mut e.bucket.max_trigger_rate_hz)?;
        e.trigger_rate_hz = e.bucket.max_trigger_rate_hz;

        set_usize(&mut take, "iccd.width", &mut e.iccd.width)?;
        set_usize(&mut take, "iccd.height", &mut e.iccd.height)?;
        set_f64(&mut take, "iccd.pixel_pitch", &mut e.iccd.pixel_pitch)?;
        set_f64(&mut take, "iccd.quantum_efficiency", &mut e.iccd.quantum_efficiency)?;
        set_f64(&mut take, "iccd.blooming_sigma_px", &mut e.iccd.blooming_sigma_px)?;
        set_f64(&mut take, "iccd.gain_mean", &mut e.iccd.gain_mean)?;
        set_f64(&mut take, "iccd.gain_sigma", &mut e.iccd.gain_sigma)?;
        set_f64(&mut take, "iccd.dark_events_per_frame", &mut e.iccd.dark_events_per_frame)?;
        set_f64(&mut take, "iccd.read_noise_sigma", &mut e.iccd.read_noise_sigma)?;

        set_f64(&mut take, "path.magnification", &mut e.path.magnification)?;
        if let Some(v) = take("path.orientation_sign") {
            e.path.orientation_sign = match v.as_str() {
                "1" | "+1" => Sign::Positive,
                "-1" => Sign::Negative,
                _ => return Err(Error::config("path.orientation_sign", format!("expected +1 or -1, got `{v}`"))),
            };
        }
        let delay_s = opt_f64(&mut take, "path.optical_delay_s")?;
        let line_m = opt_f64(&mut take, "path.delay_line_length_m")?;
        match (delay_s, line_m) {
            (Some(_), Some(_)) => {
                return Err(Error::config("path.delay_line_length_m", "conflicts with path.optical_delay_s"))
            }
            (Some(s), None) => e.path.optical_delay_s = s,
            (None, Some(m)) => {
                e.path.optical_delay_s =
                    delay_line_optical_delay(m).map_err(|err| Error::config("path.delay_line_length_m", err.to_string()))?
            }
            (None, None) => {}
        }
        set_f64(&mut take, "path.transmission", &mut e.path.transmission)?;
        set_f64(&mut take, "path.blur_sigma", &mut e.path.blur_sigma)?;

        set_f64(&mut take, "timing.electronic_delay_s", &mut e.timing.electronic_delay_s)?;
        set_f64(&mut take, "timing.cable_delay_per_m", &mut e.timing.cable_delay_per_m)?;
        set_f64(&mut take, "timing.gate_width_s", &mut e.timing.gate_width_s)?;
        set_f64(&mut take, "timing.photon_jitter_sigma_s", &mut e.timing.photon_jitter_sigma_s)?;
        e.timing.cable_length_m = e.timing.nominal_cable_length(&e.path);
        set_f64(&mut take, "timing.cable_length_m", &mut e.timing.cable_length_m)?;

        set_usize(&mut take, "run.frames", &mut e.frames)?;
        set_f64(&mut take, "run.exposure_s", &mut e.exposure_s)?;
        set_f64(&mut take, "run.trigger_rate_hz", &mut e.trigger_rate_hz)?;
        if let Some(v) = take("run.seed") {
            e.master_seed = v.parse().map_err(|_| Error::config("run.seed", format!("expected an unsigned integer, got `{v}`")))?;
        }
        if let Some(v) = take("run.sampling") {
            e.sampling = match v.as_str() {
                "conditioned" => TriggerSampling::Conditioned,
                "direct" => TriggerSampling::Direct,
                _ => return Err(Error::config("run.sampling", format!("expected conditioned or direct, got `{v}`"))),
            };
        }

        let threshold = opt_f64(&mut take, "recon.threshold")?.unwrap_or_else(|| default_threshold(&cfg.iccd));
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::config("recon.threshold", "must be >= 0"));
        }

        let mut analysis = AnalysisSettings::default();
        if let Some(v) = take("analysis.psf_mode") {
            analysis.psf_mode = match v.as_str() {
                "edge" => PsfMode::Edge,
                "spot" => PsfMode::Spot,
                _ => return Err(Error::config("analysis.psf_mode", format!("expected edge or spot, got `{v}`"))),
            };
        }
        if let Some(v) = take("analysis.edge_estimator") {
            analysis.edge_estimator = match v.as_str() {
                "fit" => EdgeEstimator::Fit,
                "crossing" => EdgeEstimator::Crossing,
                _ => return Err(Error::config("analysis.edge_estimator", format!("expected fit or crossing, got `{v}`"))),
            };
        }
        set_usize(&mut take, "analysis.erosion_px", &mut analysis.erosion_px)?;
        set_usize(&mut take, "analysis.band_lines", &mut analysis.band_lines)?;
        set_usize(&mut take, "analysis.half_window_px", &mut analysis.half_window_px)?;
        set_usize(&mut take, "analysis.field_frames", &mut analysis.field_frames)?;
        analysis.partner_psf_sigma = opt_f64(&mut take, "analysis.partner_psf_sigma")?;
        if analysis.field_frames == 0 {
            return Err(Error::config("analysis.field_frames", "must be >= 1"));
        }

        let scan_deltas_m = match take("scan.deltas_m") {
            Some(v) => parse_list("scan.deltas_m", &v)?,
            None => vec![-2.0, -1.0, 0.0, 1.0, 2.0],
        };
        let scan_frames = opt_usize(&mut take, "scan.frames")?;
        if scan_frames == Some(0) {
            return Err(Error::config("scan.frames", "must be >= 1"));
        }

        let target_photons = opt_f64(&mut take, "calibration.target_photons_per_frame")?;
        let target_eta = opt_f64(&mut take, "calibration.target_eta")?;
        if let Some(key) = kv.keys().next() {
            return Err(Error::config(key.clone(), "unknown key"));
        }

        cfg.mask = build_mask(&mask_source, mask_pitch, &cfg)?;
        let calibration_targets = target_photons.map(|n| CalibrationTargets {
            target_photons_per_frame: n,
            target_eta: target_eta.unwrap_or(DEFAULT_TARGET_ETA),
        });
        let calibration = match (calibration_targets, target_eta) {
            (Some(t), _) => {
                let (out, cal) = calibrate_efficiencies(t.target_eta, t.target_photons_per_frame, &cfg)?;
                cfg = out;
                Some(cal)
            }
            (None, Some(_)) => {
                return Err(Error::config("calibration.target_eta", "requires calibration.target_photons_per_frame"))
            }
            (None, None) => None,
        };
        cfg.validate()?;
        Ok(RunConfig {
            experiment: cfg,
            mask_source,
            mask_pitch,
            threshold,
            analysis,
            scan_deltas_m,
            scan_frames,
            calibration,
            calibration_targets,
        })
    }

    /// Canonical text that parses back to this exact configuration. The
    /// calibration is folded into the efficiencies it produced.
    pub fn echo(&self) -> String {
        let e = &self.experiment;
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("run.plane", e.plane.as_str().to_string());
        put("run.frames", e.frames.to_string());
        put("run.exposure_s", f(e.exposure_s));
        put("run.trigger_rate_hz", f(e.trigger_rate_hz));
        put("run.seed", e.master_seed.to_string());
        put("run.sampling", match e.sampling {
            TriggerSampling::Conditioned => "conditioned",
            TriggerSampling::Direct => "direct",
        }.to_string());
        put("spdc.lambda_pump", f(e.spdc.lambda_pump));
        put("spdc.lambda_down", f(e.spdc.lambda_down));
        put("spdc.crystal_length", f(e.spdc.crystal_length));
        put("spdc.pump_fwhm_intensity", f(e.spdc.pump_fwhm_intensity));
        put("spdc.magnification", f(e.spdc.magnification));
        put("spdc.effective_focal_length", f(e.spdc.effective_focal_length));
        if let Some(v) = e.state_overrides.gamma_marginal {
            put("state.gamma_marginal", f(v));
        }
        if let Some(v) = e.state_overrides.sigma_cond {
            put("state.sigma_cond", f(v));
        }
        put("mask.pitch", f(self.mask_pitch));
        match &self.mask_source {
            MaskSource::File(p) => {
                put("mask.kind", "file".into());
                let abs = std::fs::canonicalize(p).unwrap_or_else(|_| p.clone());
                put("mask.path", abs.display().to_string());
            }
            MaskSource::Builtin(name) => {
                put("mask.kind", "file".into());
                put("mask.path", format!("{BUILTIN_PREFIX}{name}"));
            }
            MaskSource::Pinhole { diameter, width, height } => {
                put("mask.kind", "pinhole".into());
                put("mask.pinhole_diameter", f(*diameter));
                put("mask.width", width.to_string());
                put("mask.height", height.to_string());
            }
            MaskSource::Open => put("mask.kind", "open".into()),
        }
        put("bucket.efficiency", f(e.bucket.efficiency));
        put("bucket.max_trigger_rate_hz", f(e.bucket.max_trigger_rate_hz));
        put("iccd.width", e.iccd.width.to_string());
        put("iccd.height", e.iccd.height.to_string());
        put("iccd.pixel_pitch", f(e.iccd.pixel_pitch));
        put("iccd.quantum_efficiency", f(e.iccd.quantum_efficiency));
        put("iccd.blooming_sigma_px", f(e.iccd.blooming_sigma_px));
        put("iccd.gain_mean", f(e.iccd.gain_mean));
        put("iccd.gain_sigma", f(e.iccd.gain_sigma));
        put("iccd.dark_events_per_frame", f(e.iccd.dark_events_per_frame));
        put("iccd.read_noise_sigma", f(e.iccd.read_noise_sigma));
        put("path.magnification", f(e.path.magnification));
        put("path.orientation_sign", match e.path.orientation_sign {
            Sign::Positive => "+1",
            Sign::Negative => "-1",
        }.to_string());
        put("path.optical_delay_s", f(e.path.optical_delay_s));
        put("path.transmission", f(e.path.transmission));
        put("path.blur_sigma", f(e.path.blur_sigma));
        put("timing.electronic_delay_s", f(e.timing.electronic_delay_s));
        put("timing.cable_delay_per_m", f(e.timing.cable_delay_per_m));
        put("timing.cable_length_m", f(e.timing.cable_length_m));
        put("timing.gate_width_s", f(e.timing.gate_width_s));
        put("timing.photon_jitter_sigma_s", f(e.timing.photon_jitter_sigma_s));
        put("recon.threshold", f(self.threshold));
        let a = &self.analysis;
        put("analysis.psf_mode", match a.psf_mode {
            PsfMode::Edge => "edge",
            PsfMode::Spot => "spot",
        }.to_string());
        put("analysis.edge_estimator", match a.edge_estimator {
            EdgeEstimator::Fit => "fit",
            EdgeEstimator::Crossing => "crossing",
        }.to_string());
        put("analysis.erosion_px", a.erosion_px.to_string());
        put("analysis.band_lines", a.band_lines.to_string());
        put("analysis.half_window_px", a.half_window_px.to_string());
        put("analysis.field_frames", a.field_frames.to_string());
        if let Some(v) = a.partner_psf_sigma {
            put("analysis.partner_psf_sigma", f(v));
        }
        put("scan.deltas_m", self.scan_deltas_m.iter().map(|&d| f(d)).collect::<Vec<_>>().join(", "));
        if let Some(n) = self.scan_frames {
            put("scan.frames", n.to_string());
        }
        s
    }

    /// Same run with an unobstructed beam, for the field-width measurement.
    pub fn open_beam(&self) -> Result<ExperimentConfig> {
        let mut e = self.experiment.clone();
        e.mask = build_mask(&MaskSource::Open, self.mask_pitch, &e)?;
        e.frames = self.analysis.field_frames;
        Ok(e)
    }
}

/// Shortest text that parses back to the same `f64`.
fn f(v: f64) -> String {
    format!("{v:?}")
}

pub fn preset(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|(n, _)| *n).collect()
}

fn build_mask(src: &MaskSource, pitch: f64, cfg: &ExperimentConfig) -> Result<ObjectMask> {
    match src {
        MaskSource::File(p) => load_mask(p, pitch),
        MaskSource::Builtin(name) => {
            let bytes = BUILTIN_MASKS
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, b)| *b)
                .ok_or_else(|| Error::config("mask.path", format!("no built-in mask `{name}`")))?;
            let img = imageio::decode_gray(bytes).map_err(|m| Error::format(format!("{BUILTIN_PREFIX}{name}"), m))?;
            let t = img.data.iter().map(|&v| v as f64 / img.maxval as f64).collect();
            ObjectMask::new(GridGeometry::new(img.width, img.height, pitch), t)
        }
        MaskSource::Pinhole { diameter, width, height } => make_pinhole_mask(*diameter, pitch, *width, *height),
        MaskSource::Open => {
            // object-plane image of the whole sensor
            let p = cfg.iccd.pixel_pitch / cfg.path.magnification;
            Ok(ObjectMask::open(GridGeometry::new(cfg.iccd.width, cfg.iccd.height, p)))
        }
    }
}

fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut kv = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::config(format!("line {}", n + 1), format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::config(format!("line {}", n + 1), "empty key or value"));
        }
        if kv.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::config(k, "duplicate key"));
        }
    }
    Ok(kv)
}

fn opt_f64(take: &mut impl FnMut(&str) -> Option<String>, key: &str) -> Result<Option<f64>> {
    take(key)
        .map(|v| match v.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(Error::config(key, format!("expected a finite number, got `{v}`"))),
        })
        .transpose()
}

fn opt_usize(take: &mut impl FnMut(&str) -> Option<String>, key: &str) -> Result<Option<usize>> {
    take(key)
        .map(|v| v.parse::<usize>().map_err(|_| Error::config(key, format!("expected a non-negative integer, got `{v}`"))))
        .transpose()
}

fn set_f64(take: &mut impl FnMut(&str) -> Option<String>, key: &str, slot: &mut f64) -> Result<()> {
    if let Some(v) = opt_f64(take, key)? {
        *slot = v;
    }
    Ok(())
}

fn set_usize(take: &mut impl FnMut(&str) -> Option<String>, key: &str, slot: &mut usize) -> Result<()> {
    if let Some(v) = opt_usize(take, key)? {
        *slot = v;
    }
    Ok(())
}

/// Comma-separated numbers.
pub fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    let out = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<f64>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(Error::config(key, format!("expected a number, got `{s}`"))),
        })
        .collect::<Result<Vec<_>>>()?;
    if out.is_empty() {
        return Err(Error::config(key, "list is empty"));
    }
    Ok(out)
}
