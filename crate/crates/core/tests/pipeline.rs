use ghostim::acquisition::{
    calibrate_efficiencies, run_and_reconstruct, run_delay_scan, run_experiment, run_streaming, ExperimentConfig,
    RunOptions, TriggerSampling,
};
use ghostim::analysis::{heralding_efficiency, spot_width};
use ghostim::config::RunConfig;
use ghostim::detection::{make_pinhole_mask, IccdModel, ObjectMask};
use ghostim::geom::GridGeometry;
use ghostim::pipeline::simulate;
use ghostim::reconstruction::GhostImage;
use ghostim::spdc::PlaneConfig;
use ghostim::Error;

fn small_sensor() -> IccdModel {
    IccdModel {
        width: 256,
        height: 256,
        dark_events_per_frame: 0.0,
        ..IccdModel::default()
    }
}

fn preset(name: &str, frames: usize) -> RunConfig {
    let mut cfg = RunConfig::load(name).unwrap();
    cfg.experiment.frames = frames;
    cfg.analysis.field_frames = frames;
    cfg
}

/// Count-weighted mean and stdev of the image along columns and rows.
fn moments(img: &GhostImage) -> [(f64, f64); 2] {
    let n = img.total() as f64;
    let mut out = [(0.0, 0.0); 2];
    for (axis, slot) in out.iter_mut().enumerate() {
        let coord = |i: usize| if axis == 0 { i % img.width } else { i / img.width } as f64;
        let mean = img.counts.iter().enumerate().map(|(i, &c)| c as f64 * coord(i)).sum::<f64>() / n;
        let var = img
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 * (coord(i) - mean).powi(2))
            .sum::<f64>()
            / n;
        *slot = (mean, var.sqrt());
    }
    out
}

#[test]
fn conditioned_and_direct_sampling_agree() {
    let mask = make_pinhole_mask(1e-3, 13e-6, 90, 90).unwrap();
    let mut cfg = ExperimentConfig::new(PlaneConfig::PositionCorrelated, mask);
    cfg.iccd = small_sensor();
    cfg.iccd.quantum_efficiency = 0.05;
    cfg.trigger_rate_hz = 2000.0;
    cfg.exposure_s = 1.0;
    cfg.frames = 8;
    cfg.master_seed = 11;
    let theta = 15.0;
    let (cond, cs) = run_and_reconstruct(&cfg, theta, RunOptions::default()).unwrap();
    cfg.sampling = TriggerSampling::Direct;
    cfg.master_seed = 12;
    let (direct, ds) = run_and_reconstruct(&cfg, theta, RunOptions::default()).unwrap();

    let (nc, nd) = (cs.total_triggers as f64, ds.total_triggers as f64);
    assert!((nc - nd).abs() <= 4.0 * (nc + nd).sqrt(), "triggers {nc} vs {nd}");
    let (ec, ed) = (cond.total() as f64, direct.total() as f64);
    assert!(ec > 200.0 && ed > 200.0, "events {ec} / {ed}");
    assert!((ec - ed).abs() <= 4.0 * (ec + ed).sqrt(), "events {ec} vs {ed}");

    for (a, b) in moments(&cond).iter().zip(moments(&direct).iter()) {
        let se_mean = (a.1 * a.1 / ec + b.1 * b.1 / ed).sqrt();
        assert!((a.0 - b.0).abs() <= 4.0 * se_mean, "mean {a:?} vs {b:?}");
        let se_sd = (a.1 * a.1 / (2.0 * ec) + b.1 * b.1 / (2.0 * ed)).sqrt();
        assert!((a.1 - b.1).abs() <= 4.0 * se_sd, "stdev {a:?} vs {b:?}");
    }
}

#[test]
fn heralding_tracks_survival_and_frames_stay_sparse() {
    let cfg = preset("position-skull", 30);
    let e = &cfg.experiment;
    let p = e.iccd.quantum_efficiency * e.path.transmission * e.timing.gate_acceptance_probability(e.timing_offset());
    let (_, stats) = run_and_reconstruct(e, cfg.threshold, RunOptions::default()).unwrap();
    let n = stats.total_triggers as f64;
    let eta = heralding_efficiency(&stats).unwrap();
    assert_eq!(stats.heralding_efficiency, Some(eta));
    assert!((eta - p).abs() <= 4.0 * (p * (1.0 - p) / n).sqrt(), "eta {eta} vs p {p}");

    let per_frame = stats.total_detected_photons as f64 / e.frames as f64;
    let occupancy = per_frame / (e.iccd.width * e.iccd.height) as f64;
    assert!(occupancy < 1e-3, "{occupancy}");
}

#[test]
fn symmetric_cable_offsets_give_equal_counts() {
    let cfg = preset("momentum-skull", 20);
    let pts = run_delay_scan(&cfg.experiment, &[-0.3, 0.3], cfg.threshold, RunOptions::default()).unwrap();
    let (a, b) = (pts[0].detected_count as f64, pts[1].detected_count as f64);
    assert!((a - b).abs() <= 3.0 * (a + b).sqrt(), "{a} vs {b}");
    assert!((pts[0].timing_offset_s + 1.5e-9).abs() < 1e-15);
    assert!(matches!(
        run_delay_scan(&cfg.experiment, &[], cfg.threshold, RunOptions::default()),
        Err(Error::Config { .. })
    ));
}

#[test]
fn frame_stack_is_written_with_manifest() {
    let mask = make_pinhole_mask(200e-6, 13e-6, 20, 20).unwrap();
    let mut cfg = ExperimentConfig::new(PlaneConfig::PositionCorrelated, mask);
    cfg.iccd = IccdModel { width: 48, height: 40, ..small_sensor() };
    cfg.frames = 3;
    cfg.master_seed = 5;
    let (stack, stats) = run_experiment(&cfg).unwrap();
    assert_eq!(stack.frames.len(), 3);

    let dir = tempfile::tempdir().unwrap();
    stack.write_dir(dir.path(), "run.frames = 3\n", 5, &stats).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(manifest["config"], "run.frames = 3\n");
    let names = manifest["frames"].as_array().unwrap();
    assert_eq!(names.len(), 3);
    for (name, frame) in names.iter().zip(&stack.frames) {
        let img = ghostim::imageio::read_gray(&dir.path().join(name.as_str().unwrap())).unwrap();
        assert_eq!((img.width, img.height), (48, 40));
        let want: Vec<u32> = frame.values.iter().map(|&v| v.round().clamp(0.0, 65535.0) as u32).collect();
        assert_eq!(img.data, want);
    }
    assert_eq!(manifest["per_frame_detected"].as_array().unwrap().len(), 3);
}

#[test]
fn frames_are_identical_for_any_worker_count() {
    let mask = make_pinhole_mask(300e-6, 13e-6, 30, 30).unwrap();
    let mut cfg = ExperimentConfig::new(PlaneConfig::MomentumAntiCorrelated, mask);
    cfg.iccd = IccdModel { width: 64, height: 64, ..IccdModel::default() };
    cfg.frames = 6;
    let one = RunOptions { workers: 1, progress: None };
    let three = RunOptions { workers: 3, progress: None };
    let (a, sa) = run_streaming(&cfg, one, |_, e| e.frame).unwrap();
    let (b, sb) = run_streaming(&cfg, three, |_, e| e.frame).unwrap();
    assert_eq!(sa, sb);
    assert!(a.iter().zip(&b).all(|(x, y)| x.values.iter().zip(&y.values).all(|(p, q)| p.to_bits() == q.to_bits())));
}

#[test]
fn opaque_mask_records_only_dark_events() {
    let mut cfg = preset("position-skull", 4);
    let g = cfg.experiment.mask.geometry;
    cfg.experiment.mask = ObjectMask::new(g, vec![0.0; g.len()]).unwrap();
    let (img, stats) = run_and_reconstruct(&cfg.experiment, cfg.threshold, RunOptions::default()).unwrap();
    assert_eq!(stats.total_triggers, 0);
    assert_eq!(stats.total_detected_photons, 0);
    assert_eq!(stats.heralding_efficiency, None);
    assert!(img.total() <= stats.total_dark_events);
    assert!(heralding_efficiency(&stats).is_err());
}

#[test]
fn pinhole_spots_track_the_partner_widths() {
    for (name, expect) in [("position-pinhole-75um", 49e-6), ("momentum-pinhole-75um", 134e-6)] {
        let mut cfg = preset(name, 400);
        cfg.analysis.field_frames = 10;
        let sim = simulate(&cfg, RunOptions::default(), RunOptions::default()).unwrap();
        let (sx, sy) = spot_width(&sim.ghost, 40, cfg.experiment.iccd.pixel_pitch).unwrap();
        for s in [sx, sy] {
            assert!((s / expect - 1.0).abs() < 0.15, "{name}: {s} vs {expect}");
        }
        assert_eq!(sim.metrics.psf_sigma_x, Some(sx));
        assert!(sim.metrics.variance_product_hbar2.is_some());
    }
}

#[test]
fn calibration_targets_fix_survival() {
    let mask = ObjectMask::open(GridGeometry::new(10, 10, 13e-6));
    let mut cfg = ExperimentConfig::new(PlaneConfig::PositionCorrelated, mask);
    cfg.trigger_rate_hz = 15_000.0;
    let (_, c) = calibrate_efficiencies(0.002, 70.0, &cfg).unwrap();
    assert!((c.survival_probability - 70.0 / 30_000.0).abs() < 1e-12);
    cfg.trigger_rate_hz = 10_000.0;
    let (_, c) = calibrate_efficiencies(0.002, 40.0, &cfg).unwrap();
    assert!((c.survival_probability - 2.0e-3).abs() < 1e-12);
    assert!(calibrate_efficiencies(0.002, 0.0, &cfg).is_err());
}

#[test]
fn config_echo_reproduces_the_run() {
    let cfg = preset("momentum-skull", 6);
    let first = simulate(&cfg, RunOptions::default(), RunOptions::default()).unwrap();
    let again = RunConfig::parse(&cfg.echo(), std::path::Path::new(".")).unwrap();
    let second = simulate(&again, RunOptions::default(), RunOptions::default()).unwrap();
    assert_eq!(first.ghost.counts, second.ghost.counts);
    assert_eq!(first.field.counts, second.field.counts);
    assert_eq!(first.stats, second.stats);
    assert_eq!(
        serde_json::to_string(&first.metrics).unwrap(),
        serde_json::to_string(&second.metrics).unwrap()
    );
}
