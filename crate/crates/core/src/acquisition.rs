//! Experiment orchestration.
//!
//! Every frame is an independent work unit. Its random numbers come from
//! ChaCha8 streams keyed by `(master_seed, frame_index, purpose)`, so a run
//! is bit-identical for any worker count. The purposes are kept apart so
//! that changing the gate timing leaves the dark events and read noise of
//! each frame untouched, which makes delay-scan points directly comparable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erf, erf_inv};
use std::f64::consts::SQRT_2;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::detection::{
    add_read_noise, bucket_detect, deposit_dark_events, deposit_photons, mask_transmit,
    BucketDetector, Exposure, Frame, IccdModel, ObjectMask,
};
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::imageio;
use crate::optics::{gate_accepts, net_timing_offset, OpticalPath, TimingModel};
use crate::reconstruction::{frame_events, GhostImage};
use crate::spdc::{derive_joint_gaussian, sample_pair, JointGaussian, PlaneConfig, SpdcParams, WidthOverrides};

/// How triggered pairs are generated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TriggerSampling {
    /// Draw the trigger count from the configured rate, then draw each
    /// triggering pair from the pair distribution conditioned on passing the
    /// mask and the bucket detector (rejection sampling in the mask window).
    #[default]
    Conditioned,
    /// Draw every pair reaching the object at the rate implied by the
    /// trigger rate, and keep those that trigger. Slow for small apertures.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub plane: PlaneConfig,
    pub spdc: SpdcParams,
    pub state_overrides: WidthOverrides,
    pub mask: ObjectMask,
    pub bucket: BucketDetector,
    pub iccd: IccdModel,
    pub timing: TimingModel,
    pub path: OpticalPath,
    pub frames: usize,
    pub exposure_s: f64,
    /// Rate of bucket-detector triggers.
    pub trigger_rate_hz: f64,
    pub master_seed: u64,
    pub sampling: TriggerSampling,
}

impl ExperimentConfig {
    /// Defaults for `plane` with the given mask.
    pub fn new(plane: PlaneConfig, mask: ObjectMask) -> Self {
        let bucket = BucketDetector::for_plane(plane);
        ExperimentConfig {
            plane,
            spdc: SpdcParams::default(),
            state_overrides: WidthOverrides::default(),
            mask,
            bucket,
            iccd: IccdModel::default(),
            timing: TimingModel::default(),
            path: OpticalPath::default(),
            frames: 1800,
            exposure_s: 2.0,
            trigger_rate_hz: bucket.max_trigger_rate_hz,
            master_seed: 0,
            sampling: TriggerSampling::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.spdc.validate()?;
        self.bucket.validate()?;
        self.iccd.validate()?;
        self.timing.validate()?;
        self.path.validate()?;
        if self.frames < 1 {
            return Err(Error::config("run.frames", "must be >= 1"));
        }
        if !(self.exposure_s.is_finite() && self.exposure_s > 0.0) {
            return Err(Error::config("run.exposure_s", "must be > 0"));
        }
        if !(self.trigger_rate_hz.is_finite() && self.trigger_rate_hz >= 0.0) {
            return Err(Error::config("run.trigger_rate_hz", "must be >= 0"));
        }
        if self.trigger_rate_hz > self.bucket.max_trigger_rate_hz {
            return Err(Error::config(
                "run.trigger_rate_hz",
                format!(
                    "{} Hz exceeds the bucket detector ceiling of {} Hz",
                    self.trigger_rate_hz, self.bucket.max_trigger_rate_hz
                ),
            ));
        }
        self.state()?;
        Ok(())
    }

    pub fn state(&self) -> Result<JointGaussian> {
        derive_joint_gaussian(&self.spdc, self.plane, &self.state_overrides)
    }

    pub fn timing_offset(&self) -> f64 {
        net_timing_offset(&self.timing, &self.path)
    }

    /// Mean triggers per frame.
    pub fn triggers_per_frame(&self) -> f64 {
        self.trigger_rate_hz * self.exposure_s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub total_triggers: u64,
    /// Photons that reached the sensor and produced a photoelectron splat.
    pub total_detected_photons: u64,
    pub per_frame_detected: Vec<u64>,
    pub per_frame_triggers: Vec<u64>,
    pub total_dark_events: u64,
    /// `total_detected_photons / total_triggers`; `None` without triggers.
    pub heralding_efficiency: Option<f64>,
}

impl RunStats {
    fn push(&mut self, triggers: u64, detected: u64, dark: u64) {
        self.total_triggers += triggers;
        self.total_detected_photons += detected;
        self.total_dark_events += dark;
        self.per_frame_triggers.push(triggers);
        self.per_frame_detected.push(detected);
        self.heralding_efficiency = if self.total_triggers > 0 {
            Some(self.total_detected_photons as f64 / self.total_triggers as f64)
        } else {
            None
        };
    }
}

#[derive(Clone, Copy)]
enum Stream {
    Triggers = 0,
    Photons = 1,
    Dark = 2,
    ReadNoise = 3,
}

/// Random stream for one purpose within one frame.
fn frame_rng(master_seed: u64, frame: usize, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(frame as u64 * 4 + stream as u64);
    rng
}

/// Per-axis Gaussian restricted to `[lo, hi)`.
#[derive(Debug, Clone, Copy)]
struct TruncatedAxis {
    lo: f64,
    hi: f64,
    sigma: f64,
    cdf_lo: f64,
    cdf_hi: f64,
}

impl TruncatedAxis {
    fn new(lo: f64, hi: f64, sigma: f64) -> Self {
        let cdf = |x: f64| 0.5 * (1.0 + erf(x / (sigma * SQRT_2)));
        TruncatedAxis {
            lo,
            hi,
            sigma,
            cdf_lo: cdf(lo),
            cdf_hi: cdf(hi),
        }
    }

    fn mass(&self) -> f64 {
        self.cdf_hi - self.cdf_lo
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.mass() > 0.3 {
            loop {
                let x = self.sigma * rng.sample::<f64, _>(StandardNormal);
                if x >= self.lo && x < self.hi {
                    return x;
                }
            }
        }
        let u = self.cdf_lo + (self.cdf_hi - self.cdf_lo) * rng.random::<f64>();
        let x = self.sigma * SQRT_2 * erf_inv(2.0 * u - 1.0);
        x.clamp(self.lo, self.hi - self.hi.abs().max(self.lo.abs()) * f64::EPSILON)
    }
}

/// Everything a frame needs that does not change between frames.
struct RunPlan<'a> {
    cfg: &'a ExperimentConfig,
    state: JointGaussian,
    delta_t: f64,
    mode: PlanMode,
}

enum PlanMode {
    NoTriggers,
    Conditioned {
        triggers: Poisson<f64>,
        x: TruncatedAxis,
        y: TruncatedAxis,
    },
    Direct {
        candidates: Poisson<f64>,
    },
}

/// Acceptance below which conditioned sampling is refused as hopeless.
const MIN_CONDITIONED_ACCEPTANCE: f64 = 1e-7;

impl<'a> RunPlan<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let state = cfg.state()?;
        let sigma_obj = state.object_marginal_sigma();
        let mean_triggers = cfg.triggers_per_frame();
        let can_trigger =
            mean_triggers > 0.0 && cfg.mask.max() > 0.0 && cfg.bucket.efficiency > 0.0;
        let mode = if !can_trigger {
            PlanMode::NoTriggers
        } else {
            match cfg.sampling {
                TriggerSampling::Conditioned => {
                    let (lo, hi) = cfg.mask.geometry.bounds();
                    let x = TruncatedAxis::new(lo.x, hi.x, sigma_obj);
                    let y = TruncatedAxis::new(lo.y, hi.y, sigma_obj);
                    let window = x.mass() * y.mass();
                    let inside = cfg.mask.gaussian_weighted_transmission(sigma_obj, 1);
                    let acceptance = if window > 0.0 {
                        cfg.bucket.efficiency * inside / window
                    } else {
                        0.0
                    };
                    if acceptance < MIN_CONDITIONED_ACCEPTANCE {
                        return Err(Error::config(
                            "mask",
                            format!("mask transmits too little of the beam (acceptance {acceptance:.2e})"),
                        ));
                    }
                    PlanMode::Conditioned {
                        triggers: poisson(mean_triggers)?,
                        x,
                        y,
                    }
                }
                TriggerSampling::Direct => {
                    let p_trigger = cfg.bucket.efficiency
                        * cfg.mask.gaussian_weighted_transmission(sigma_obj, 2);
                    if p_trigger <= 0.0 {
                        PlanMode::NoTriggers
                    } else {
                        PlanMode::Direct {
                            candidates: poisson(mean_triggers / p_trigger)?,
                        }
                    }
                }
            }
        };
        Ok(RunPlan {
            cfg,
            state,
            delta_t: cfg.timing_offset(),
            mode,
        })
    }

    /// Camera-plane partner positions of this frame's triggering pairs.
    fn triggered_pairs(&self, rng: &mut ChaCha8Rng) -> Vec<Vec2> {
        let cfg = self.cfg;
        match &self.mode {
            PlanMode::NoTriggers => Vec::new(),
            PlanMode::Conditioned { triggers, x, y } => {
                let n = triggers.sample(rng) as usize;
                let mut out = Vec::with_capacity(n);
                for _ in 0..n {
                    let rho_obj = loop {
                        let p = Vec2::new(x.sample(rng), y.sample(rng));
                        let passed = mask_transmit(&cfg.mask, p, rng);
                        if bucket_detect(passed, &cfg.bucket, rng) {
                            break p;
                        }
                    };
                    let _t_emit = rng.random::<f64>() * cfg.exposure_s;
                    out.push(self.state.sample_camera_given_object(rho_obj, rng));
                }
                out
            }
            PlanMode::Direct { candidates } => {
                let n = candidates.sample(rng) as u64;
                let mut out = Vec::new();
                for _ in 0..n {
                    let pair = sample_pair(&self.state, rng, cfg.exposure_s);
                    let passed = mask_transmit(&cfg.mask, pair.rho_obj, rng);
                    if bucket_detect(passed, &cfg.bucket, rng) {
                        out.push(pair.rho_cam);
                    }
                }
                out
            }
        }
    }

    fn simulate_frame(&self, index: usize) -> FrameOutcome {
        let cfg = self.cfg;
        let mut trig_rng = frame_rng(cfg.master_seed, index, Stream::Triggers);
        let partners = self.triggered_pairs(&mut trig_rng);
        let triggers = partners.len() as u64;
        let mut photons = Vec::with_capacity(partners.len() / 64 + 1);
        for rho_cam in partners {
            // fixed draw count per trigger keeps streams aligned across timings
            let on_sensor = cfg.path.map(rho_cam, &mut trig_rng);
            let transmitted = trig_rng.random::<f64>() < cfg.path.transmission;
            let in_gate = gate_accepts(self.delta_t, &cfg.timing, &mut trig_rng);
            if transmitted && in_gate {
                photons.push(on_sensor);
            }
        }
        let mut frame = Frame::zeros(cfg.iccd.width, cfg.iccd.height, cfg.exposure_s);
        let photon_splats = deposit_photons(
            &mut frame,
            &photons,
            &cfg.iccd,
            &mut frame_rng(cfg.master_seed, index, Stream::Photons),
        );
        let dark_splats = deposit_dark_events(
            &mut frame,
            &cfg.iccd,
            &mut frame_rng(cfg.master_seed, index, Stream::Dark),
        );
        add_read_noise(
            &mut frame,
            &cfg.iccd,
            &mut frame_rng(cfg.master_seed, index, Stream::ReadNoise),
        );
        FrameOutcome {
            exposure: Exposure {
                frame,
                photon_splats,
                dark_splats,
            },
            triggers,
        }
    }
}

fn poisson(mean: f64) -> Result<Poisson<f64>> {
    Poisson::new(mean).map_err(|e| Error::config("run.trigger_rate_hz", e.to_string()))
}

struct FrameOutcome {
    exposure: Exposure,
    triggers: u64,
}

/// Execution knobs that never change the results.
#[derive(Clone, Copy, Default)]
pub struct RunOptions<'a> {
    /// Worker threads; 0 uses the global rayon pool.
    pub workers: usize,
    /// Called with the number of completed frames.
    pub progress: Option<&'a (dyn Fn(usize, usize) + Sync)>,
}

/// Runs every frame through `per_frame` and returns the results in frame order.
pub fn run_streaming<T, F>(cfg: &ExperimentConfig, opts: RunOptions<'_>, per_frame: F) -> Result<(Vec<T>, RunStats)>
where
    T: Send,
    F: Fn(usize, Exposure) -> T + Sync,
{
    let plan = RunPlan::new(cfg)?;
    let done = AtomicUsize::new(0);
    let work = || {
        (0..cfg.frames)
            .into_par_iter()
            .map(|i| {
                let out = plan.simulate_frame(i);
                let counts = (out.triggers, out.exposure.photon_splats as u64, out.exposure.dark_splats as u64);
                let value = per_frame(i, out.exposure);
                if let Some(cb) = opts.progress {
                    cb(done.fetch_add(1, Ordering::Relaxed) + 1, cfg.frames);
                }
                (counts, value)
            })
            .collect::<Vec<_>>()
    };
    let results = if opts.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::config("workers", e.to_string()))?
            .install(work)
    } else {
        work()
    };
    let mut stats = RunStats::default();
    let mut values = Vec::with_capacity(results.len());
    for ((triggers, detected, dark), v) in results {
        stats.push(triggers, detected, dark);
        values.push(v);
    }
    Ok((values, stats))
}

/// Analog frames of a run, kept in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameStack {
    pub frames: Vec<Frame>,
}

impl FrameStack {
    /// Writes `frame_NNNNN.pgm` (16-bit, analog values rounded and clamped
    /// to `[0, 65535]`) plus `manifest.json`.
    pub fn write_dir(&self, dir: &Path, config_echo: &str, seed: u64, stats: &RunStats) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::new();
        for (i, f) in self.frames.iter().enumerate() {
            let name = format!("frame_{i:05}.pgm");
            let data: Vec<u16> = f
                .values
                .iter()
                .map(|&v| v.round().clamp(0.0, 65535.0) as u16)
                .collect();
            imageio::write_bytes(&dir.join(&name), &imageio::encode_pgm16(f.width, f.height, 65535, &data))?;
            files.push(name);
        }
        let manifest = serde_json::json!({
            "config": config_echo,
            "seed": seed,
            "frames": files,
            "per_frame_detected": stats.per_frame_detected,
            "per_frame_triggers": stats.per_frame_triggers,
        });
        let path = dir.join("manifest.json");
        let bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::format(&path, e.to_string()))?;
        imageio::write_bytes(&path, &bytes)
    }
}

/// Runs the experiment keeping every analog frame. Memory grows with the
/// frame count; use [`run_and_reconstruct`] for long runs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(FrameStack, RunStats)> {
    let (frames, stats) = run_streaming(cfg, RunOptions::default(), |_, e| e.frame)?;
    Ok((FrameStack { frames }, stats))
}

/// Default event threshold: five read-noise standard deviations.
pub fn default_threshold(iccd: &IccdModel) -> f64 {
    5.0 * iccd.read_noise_sigma
}

/// Runs the experiment and photon-counts each frame as it is produced.
pub fn run_and_reconstruct(cfg: &ExperimentConfig, theta: f64, opts: RunOptions<'_>) -> Result<(GhostImage, RunStats)> {
    let (events, stats) = run_streaming(cfg, opts, |_, e| frame_events(&e.frame, theta))?;
    let image = crate::reconstruction::accumulate(events.iter().map(Vec::as_slice), cfg.iccd.width, cfg.iccd.height);
    Ok((image, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayPoint {
    pub cable_delta_m: f64,
    pub timing_offset_s: f64,
    pub image: GhostImage,
    pub detected_count: u64,
    pub stats: RunStats,
}

/// Repeats the run with the trigger cable lengthened by each delta. All
/// points share the master seed.
pub fn run_delay_scan(
    cfg: &ExperimentConfig,
    cable_deltas_m: &[f64],
    theta: f64,
    opts: RunOptions<'_>,
) -> Result<Vec<DelayPoint>> {
    if cable_deltas_m.is_empty() {
        return Err(Error::config("deltas", "at least one cable delta is required"));
    }
    cable_deltas_m
        .iter()
        .map(|&delta| {
            if !delta.is_finite() {
                return Err(Error::config("deltas", format!("non-finite delta {delta}")));
            }
            let mut c = cfg.clone();
            c.timing.cable_length_m += delta;
            let (image, stats) = run_and_reconstruct(&c, theta, opts)?;
            Ok(DelayPoint {
                cable_delta_m: delta,
                timing_offset_s: c.timing_offset(),
                detected_count: image.meta.total_events,
                image,
                stats,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Probability that a trigger yields a detected photon.
    pub survival_probability: f64,
    pub quantum_efficiency: f64,
    pub transmission: f64,
    pub gate_acceptance: f64,
    /// `(survival - target_eta) / target_eta`.
    pub eta_relative_deviation: f64,
}

/// Sets the camera-arm survival so that the run yields
/// `target_photons_per_frame` detections per frame at the configured trigger
/// rate. The delay-line transmission is kept and the photocathode
/// efficiency absorbs the rest.
pub fn calibrate_efficiencies(
    target_eta: f64,
    target_photons_per_frame: f64,
    cfg: &ExperimentConfig,
) -> Result<(ExperimentConfig, Calibration)> {
    if !(target_eta.is_finite() && target_eta > 0.0) {
        return Err(Error::config("calibration.target_eta", "must be > 0"));
    }
    if !(target_photons_per_frame.is_finite() && target_photons_per_frame > 0.0) {
        return Err(Error::config("calibration.target_photons_per_frame", "must be > 0"));
    }
    let triggers = cfg.triggers_per_frame();
    if triggers <= 0.0 {
        return Err(Error::config("run.trigger_rate_hz", "calibration needs a positive trigger rate"));
    }
    let p = target_photons_per_frame / triggers;
    if p >= 1.0 {
        return Err(Error::config(
            "calibration.target_photons_per_frame",
            format!("needs survival probability {p:.3} >= 1 at {triggers} triggers per frame"),
        ));
    }
    let gate = cfg.timing.gate_acceptance_probability(cfg.timing_offset());
    let transmission = cfg.path.transmission;
    let qe = p / (transmission * gate);
    if qe.is_nan() || qe > 1.0 {
        return Err(Error::config(
            "calibration.target_photons_per_frame",
            format!("needs quantum efficiency {qe:.3} > 1 with transmission {transmission} and gate acceptance {gate:.3}"),
        ));
    }
    let mut out = cfg.clone();
    out.iccd.quantum_efficiency = qe;
    Ok((
        out,
        Calibration {
            survival_probability: p,
            quantum_efficiency: qe,
            transmission,
            gate_acceptance: gate,
            eta_relative_deviation: (p - target_eta) / target_eta,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::GridGeometry;

    fn small_cfg(mask: ObjectMask) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(PlaneConfig::PositionCorrelated, mask);
        cfg.iccd.width = 128;
        cfg.iccd.height = 128;
        cfg.iccd.pixel_pitch = 26e-6;
        cfg.frames = 4;
        cfg.trigger_rate_hz = 1000.0;
        cfg.iccd.quantum_efficiency = 0.5;
        cfg
    }

    #[test]
    fn opaque_mask_never_triggers() {
        let geom = GridGeometry::new(16, 16, 1e-4);
        let mask = ObjectMask::new(geom, vec![0.0; 256]).unwrap();
        for sampling in [TriggerSampling::Conditioned, TriggerSampling::Direct] {
            let mut cfg = small_cfg(mask.clone());
            cfg.sampling = sampling;
            cfg.iccd.dark_events_per_frame = 0.0;
            let (stack, stats) = run_experiment(&cfg).unwrap();
            assert_eq!(stats.total_triggers, 0);
            assert_eq!(stats.heralding_efficiency, None);
            let theta = default_threshold(&cfg.iccd);
            assert!(stack.frames.iter().all(|f| frame_events(f, theta).is_empty()));
        }
    }

    #[test]
    fn rate_ceiling_is_enforced() {
        let mut cfg = small_cfg(ObjectMask::open(GridGeometry::new(8, 8, 1e-4)));
        cfg.trigger_rate_hz = cfg.bucket.max_trigger_rate_hz * 1.01;
        assert!(matches!(cfg.validate(), Err(Error::Config { .. })));
    }

    #[test]
    fn calibration_examples() {
        let mask = ObjectMask::open(GridGeometry::new(8, 8, 1e-4));
        let cfg = ExperimentConfig::new(PlaneConfig::PositionCorrelated, mask.clone());
        let (_, c) = calibrate_efficiencies(0.002, 70.0, &cfg).unwrap();
        assert!((c.survival_probability - 70.0 / 30000.0).abs() < 1e-12);
        assert!((c.survival_probability - 2.33e-3).abs() < 1e-5);
        let far = ExperimentConfig::new(PlaneConfig::MomentumAntiCorrelated, mask);
        let (out, c) = calibrate_efficiencies(0.002, 40.0, &far).unwrap();
        assert!((c.survival_probability - 2.0e-3).abs() < 1e-12);
        assert!(c.eta_relative_deviation.abs() < 1e-9);
        let lumped = out.iccd.quantum_efficiency * out.path.transmission * c.gate_acceptance;
        assert!((lumped - 2.0e-3).abs() < 1e-12);
        assert!(calibrate_efficiencies(0.002, 0.0, &cfg).is_err());
        assert!(calibrate_efficiencies(0.002, 40000.0, &cfg).is_err());
    }

    #[test]
    fn truncated_axis_stays_in_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (lo, hi) in [(-1.0, 1.0), (-0.01, 0.02), (2.0, 2.5)] {
            let ax = TruncatedAxis::new(lo, hi, 1.0);
            for _ in 0..2000 {
                let x = ax.sample(&mut rng);
                assert!(x >= lo && x < hi, "{x} not in [{lo}, {hi})");
            }
        }
    }

    #[test]
    fn truncated_axis_matches_truncated_mean() {
        // window [0.5, 1.5] of a unit normal: mean = (phi(a) - phi(b)) / mass
        let ax = TruncatedAxis::new(0.5, 1.5, 1.0);
        let phi = |x: f64| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let want = (phi(0.5) - phi(1.5)) / ax.mass();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 200_000;
        let mean = (0..n).map(|_| ax.sample(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - want).abs() < 3e-3, "{mean} vs {want}");
    }
}
