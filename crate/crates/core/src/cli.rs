//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration or argument error, 3 I/O or
//! file-format error, 1 anything else.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::acquisition::{calibrate_efficiencies, run_delay_scan, Calibration, RunOptions, RunStats};
use crate::analysis::{compute_metrics, MetricsReport};
use crate::config::{parse_list, RunConfig, DEFAULT_TARGET_ETA};
use crate::detection::load_mask;
use crate::error::{Error, Result};
use crate::imageio;
use crate::pipeline::{simulate as simulate_run, Simulation};
use crate::reconstruction::{GhostImage, GhostMeta};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "ghostim", version, about = "Ghost imaging with entangled photon pairs and a triggered ICCD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one acquisition, reconstruct the ghost image and score it.
    Simulate(SimulateArgs),
    /// Repeat the acquisition over trigger-cable length changes.
    DelayScan(DelayScanArgs),
    /// Recompute metrics for a stored ghost image.
    Analyze(AnalyzeArgs),
    /// Solve for the camera-arm efficiency that meets a photon-count target.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file or preset name.
    config: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long, env = "GHOSTIM_OUT_DIR", default_value = "ghostim-out")]
    out_dir: PathBuf,
    /// Worker threads (0 = all cores). Never changes the results.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Suppress the per-frame counter.
    #[arg(long)]
    quiet: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    /// Also write an 8-bit PNG rendering.
    #[arg(long)]
    png: bool,
}

#[derive(Args, Debug)]
struct DelayScanArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated cable length changes in metres.
    #[arg(long, allow_hyphen_values = true)]
    deltas_m: Option<String>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Ghost image (PGM or PNG).
    image: PathBuf,
    /// Configuration file or preset name the image was produced with.
    #[arg(long)]
    config: String,
    /// Mask bitmap replacing the configured one.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Unobstructed-beam image; defaults to `field.pgm` beside the image.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Run statistics; defaults to `<image stem>.meta.json` beside the image.
    #[arg(long)]
    meta: Option<PathBuf>,
    #[arg(long, env = "GHOSTIM_OUT_DIR", default_value = "ghostim-out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    config: String,
    #[arg(long)]
    target_photons: Option<f64>,
    #[arg(long)]
    target_eta: Option<f64>,
    #[arg(long, env = "GHOSTIM_OUT_DIR", default_value = "ghostim-out")]
    out_dir: PathBuf,
}

/// Sidecar written next to each ghost image.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageMeta {
    pub ghost: GhostMeta,
    pub stats: RunStats,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_echo: String,
    pub master_seed: u64,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    pub outputs: Vec<String>,
    pub metrics: Option<MetricsReport>,
    pub calibration: Option<Calibration>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayScanRow {
    pub cable_delta_m: f64,
    pub timing_offset_s: f64,
    pub detected_count: u64,
    pub total_triggers: u64,
    pub image: String,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::DelayScan(a) => delay_scan(a),
        Command::Analyze(a) => analyze(a),
        Command::Calibrate(a) => calibrate(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } | Error::Domain(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::Format { .. } => EXIT_IO,
        Error::Metric(_) => EXIT_FAILURE,
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.experiment.master_seed = s;
    }
    if let Some(n) = common.frames {
        if n == 0 {
            return Err(Error::config("--frames", "must be >= 1"));
        }
        cfg.experiment.frames = n;
        cfg.scan_frames = Some(n);
    }
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    bytes.push(b'\n');
    imageio::write_bytes(path, &bytes)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn progress(label: &str, quiet: bool) -> impl Fn(usize, usize) + Sync + '_ {
    move |done, total| {
        if !quiet {
            let mut err = std::io::stderr().lock();
            let _ = write!(err, "\r{label}: frame {done}/{total}");
            if done == total {
                let _ = writeln!(err);
            }
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let started = now();
    let cfg = load(&a.common)?;
    let out = &a.common.out_dir;
    create_dir(out)?;
    let echo = cfg.echo();

    let ghost_report = progress("ghost", a.common.quiet);
    let field_report = progress("field", a.common.quiet);
    let Simulation {
        ghost,
        field,
        stats,
        metrics,
        notes,
    } = simulate_run(
        &cfg,
        RunOptions {
            workers: a.common.workers,
            progress: Some(&ghost_report),
        },
        RunOptions {
            workers: a.common.workers,
            progress: Some(&field_report),
        },
    )?;
    for n in &notes {
        eprintln!("note: {n}");
    }

    let mut outputs = vec![
        "ghost.pgm".to_string(),
        "ghost.meta.json".into(),
        "field.pgm".into(),
        "metrics.json".into(),
        "config.echo.conf".into(),
    ];
    ghost.write_pgm(&out.join("ghost.pgm"))?;
    write_json(&out.join("ghost.meta.json"), &ImageMeta { ghost: ghost.meta.clone(), stats: stats.clone() })?;
    field.write_pgm(&out.join("field.pgm"))?;
    write_json(&out.join("metrics.json"), &metrics)?;
    imageio::write_bytes(&out.join("config.echo.conf"), echo.as_bytes())?;
    if a.png {
        ghost.write_png(&out.join("ghost.png"))?;
        outputs.push("ghost.png".into());
    }
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        command: "simulate".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config_echo: echo,
        master_seed: cfg.experiment.master_seed,
        started_unix_s: started,
        finished_unix_s: now(),
        outputs,
        metrics: Some(metrics),
        calibration: cfg.calibration,
        notes,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("{}", serde_json::to_string_pretty(&metrics).unwrap_or_default());
    Ok(())
}

fn delay_scan(a: DelayScanArgs) -> Result<()> {
    let started = now();
    let mut cfg = load(&a.common)?;
    if let Some(list) = &a.deltas_m {
        cfg.scan_deltas_m = parse_list("--deltas-m", list)?;
    }
    if let Some(n) = cfg.scan_frames {
        cfg.experiment.frames = n;
    }
    let out = &a.common.out_dir;
    create_dir(out)?;
    let report = progress("delay scan", a.common.quiet);
    let points = run_delay_scan(
        &cfg.experiment,
        &cfg.scan_deltas_m,
        cfg.threshold,
        RunOptions {
            workers: a.common.workers,
            progress: Some(&report),
        },
    )?;
    let mut rows = Vec::new();
    let mut outputs = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let name = format!("delay_{i:02}.pgm");
        p.image.write_pgm(&out.join(&name))?;
        rows.push(DelayScanRow {
            cable_delta_m: p.cable_delta_m,
            timing_offset_s: p.timing_offset_s,
            detected_count: p.detected_count,
            total_triggers: p.stats.total_triggers,
            image: name.clone(),
        });
        outputs.push(name);
    }
    write_json(&out.join("delay_scan.json"), &rows)?;
    outputs.push("delay_scan.json".into());
    outputs.push("manifest.json".into());
    let echo = cfg.echo();
    write_json(
        &out.join("manifest.json"),
        &RunManifest {
            command: "delay-scan".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_echo: echo,
            master_seed: cfg.experiment.master_seed,
            started_unix_s: started,
            finished_unix_s: now(),
            outputs,
            metrics: None,
            calibration: cfg.calibration,
            notes: Vec::new(),
        },
    )?;
    for r in &rows {
        println!("{:+.3} m  {:+.2e} s  {}", r.cable_delta_m, r.timing_offset_s, r.detected_count);
    }
    Ok(())
}

fn sidecar(image: &Path, suffix: &str) -> PathBuf {
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    image.with_file_name(format!("{stem}{suffix}"))
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(m) = &a.mask {
        cfg.experiment.mask = load_mask(m, cfg.mask_pitch)?;
    }
    let ghost = GhostImage::read_pgm(&a.image)?;
    let iccd = &cfg.experiment.iccd;
    if (ghost.width, ghost.height) != (iccd.width, iccd.height) {
        return Err(Error::config(
            "iccd.width",
            format!(
                "image is {}x{} but the configured sensor is {}x{}",
                ghost.width, ghost.height, iccd.width, iccd.height
            ),
        ));
    }
    let (lo, hi) = cfg.experiment.mask.geometry.bounds();
    let (slo, shi) = iccd.geometry().bounds();
    let m = cfg.experiment.path.magnification;
    let fits = |l: f64, h: f64, sl: f64, sh: f64| l.abs().max(h.abs()) * m <= sl.abs().min(sh.abs()) * (1.0 + 1e-9);
    if !(fits(lo.x, hi.x, slo.x, shi.x) && fits(lo.y, hi.y, slo.y, shi.y)) {
        return Err(Error::config("mask", "mask footprint does not fit on the sensor"));
    }
    let field_path = a.field.clone().unwrap_or_else(|| a.image.with_file_name("field.pgm"));
    let field = if a.field.is_some() || field_path.is_file() {
        Some(GhostImage::read_pgm(&field_path)?)
    } else {
        None
    };
    let meta_path = a.meta.clone().unwrap_or_else(|| sidecar(&a.image, ".meta.json"));
    let stats = if a.meta.is_some() || meta_path.is_file() {
        let bytes = std::fs::read(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: ImageMeta = serde_json::from_slice(&bytes).map_err(|e| Error::format(&meta_path, e.to_string()))?;
        Some(meta.stats)
    } else {
        None
    };
    let (metrics, notes) = compute_metrics(&ghost, field.as_ref(), stats.as_ref(), &cfg.experiment, &cfg.analysis);
    for n in &notes {
        eprintln!("note: {n}");
    }
    create_dir(&a.out_dir)?;
    write_json(&a.out_dir.join("metrics.json"), &metrics)?;
    println!("{}", serde_json::to_string_pretty(&metrics).unwrap_or_default());
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    let prior = cfg.calibration_targets;
    let photons = a.target_photons.or(prior.map(|t| t.target_photons_per_frame));
    let eta = a.target_eta.or(prior.map(|t| t.target_eta)).unwrap_or(DEFAULT_TARGET_ETA);
    let cal = match photons {
        Some(n) => {
            let (exp, cal) = calibrate_efficiencies(eta, n, &cfg.experiment)?;
            cfg.experiment = exp;
            cfg.calibration = Some(cal);
            cal
        }
        None => {
            return Err(Error::config(
                "calibration.target_photons_per_frame",
                "no target given on the command line or in the configuration",
            ))
        }
    };
    create_dir(&a.out_dir)?;
    imageio::write_bytes(&a.out_dir.join("calibrated.conf"), cfg.echo().as_bytes())?;
    write_json(&a.out_dir.join("calibration.json"), &cal)?;
    println!("{}", serde_json::to_string_pretty(&cal).unwrap_or_default());
    Ok(())
}
