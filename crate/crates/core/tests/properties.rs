mod common;

use ghostim::analysis::{
    contrast, edge_psf_sigma, edge_transition_width, epr_report, mode_count, Axis, PsfBand, EDGE_WIDTH_IN_SIGMA,
};
use ghostim::config::BUILTIN_MASKS;
use ghostim::detection::{add_read_noise, iccd_expose, mask_transmit, Frame, IccdModel, ObjectMask};
use ghostim::geom::{GridGeometry, Sign, Vec2};
use ghostim::imageio::decode_gray;
use ghostim::optics::{gate_accepts, net_timing_offset, orient, OpticalPath, TimingModel};
use ghostim::reconstruction::{
    accumulate, extract_events, frame_events, threshold_frame, BinaryGrid, GhostImage, PhotonEvent,
};
use ghostim::spdc::{correlation_length_far_field, correlation_length_image_plane, SpdcParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs())
}

proptest! {
    #[test]
    fn image_plane_length_scales_with_magnification_and_root_length(
        l in 1e-4f64..1e-2, lp in 2e-7f64..1e-6, m in 0.1f64..10.0, k in 0.1f64..10.0,
    ) {
        let base = correlation_length_image_plane(l, lp, m).unwrap();
        prop_assert!(close(correlation_length_image_plane(l, lp, k * m).unwrap(), k * base, 1e-12));
        prop_assert!(close(correlation_length_image_plane(k * k * l, lp, m).unwrap(), k * base, 1e-12));
    }

    #[test]
    fn far_field_length_scales_inversely_with_pump_size(
        f in 0.01f64..1.0, sp in 1e-4f64..5e-3, lam in 3e-7f64..2e-6, k in 0.1f64..10.0,
    ) {
        let base = correlation_length_far_field(f, sp, lam).unwrap();
        prop_assert!(close(correlation_length_far_field(f, k * sp, lam).unwrap(), base / k, 1e-12));
        prop_assert!(close(correlation_length_far_field(k * f, sp, lam).unwrap(), k * base, 1e-12));
        prop_assert!(close(correlation_length_far_field(f, sp, k * lam).unwrap(), k * base, 1e-12));
    }

    #[test]
    fn gate_acceptance_is_symmetric_and_falls_off(
        dt in 0.0f64..20e-9, step in 0.0f64..5e-9, jitter in 0.0f64..2e-9, gate in 1e-9f64..10e-9,
    ) {
        let t = TimingModel { photon_jitter_sigma_s: jitter, gate_width_s: gate, ..TimingModel::default() };
        let p = t.gate_acceptance_probability(dt);
        prop_assert!((p - t.gate_acceptance_probability(-dt)).abs() <= 1e-12);
        prop_assert!(t.gate_acceptance_probability(dt + step) <= p + 1e-12);
        prop_assert!((0.0..=1.0).contains(&p));
    }

    #[test]
    fn orientation_is_an_isometry_and_involution(x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let v = Vec2::new(x, y);
        for s in [Sign::Positive, Sign::Negative] {
            prop_assert_eq!(orient(v, s).norm(), v.norm());
            prop_assert_eq!(orient(orient(v, s), s), v);
        }
    }

    #[test]
    fn contrast_ignores_uniform_rescaling(
        counts in prop::collection::vec(0u32..1000, 64),
        split in 1usize..63,
        k in 1u32..50,
    ) {
        let mut img = GhostImage::new(8, 8);
        img.counts = counts;
        let bright: Vec<usize> = (0..split).collect();
        let dark: Vec<usize> = (split..64).collect();
        let mut scaled = img.clone();
        scaled.counts.iter_mut().for_each(|c| *c *= k);
        match (contrast(&img, &bright, &dark), contrast(&scaled, &bright, &dark)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() <= 1e-12),
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{a:?} vs {b:?}"),
        }
    }

    #[test]
    fn edge_psf_recovers_generating_sigma(
        sigma in 40e-6f64..200e-6, offset in 0.0f64..1.0, horizontal in any::<bool>(),
    ) {
        let pitch = 13e-6;
        let img = common::synthetic_edge_image(160, 160, 80.0 + offset, sigma / pitch, 1e6, horizontal);
        let axis = if horizontal { Axis::X } else { Axis::Y };
        let band = PsfBand { axis, band: 65..95, window: 40..121 };
        let got = edge_psf_sigma(&img, &band, pitch).unwrap();
        prop_assert!(close(got, sigma, 0.05), "{got} vs {sigma}");
    }

    #[test]
    fn mode_count_is_scale_invariant(g in 1e-4f64..1e-2, ratio in 1.0f64..1e3, k in 1e-3f64..1e3) {
        let s = g / ratio;
        let (a, _) = mode_count(g, s).unwrap();
        let (b, _) = mode_count(k * g, k * s).unwrap();
        prop_assert!(close(a, b, 1e-9));
    }

    #[test]
    fn enlarging_a_width_never_creates_a_violation(
        p in 1e-6f64..1e-3, m in 1e-6f64..1e-3, fp in 1.0f64..20.0, fm in 1.0f64..20.0,
    ) {
        let params = SpdcParams::default();
        let (_, before) = epr_report(p, m, &params).unwrap();
        let (_, after) = epr_report(p * fp, m * fm, &params).unwrap();
        prop_assert!(before || !after);
    }

    #[test]
    fn events_span_two_pixels_and_follow_translation(
        cells in prop::collection::vec(any::<bool>(), 16 * 16),
        dx in 0usize..8, dy in 0usize..8,
    ) {
        let grid = BinaryGrid::new(16, 16, cells.clone());
        let frame = Frame { width: 16, height: 16, values: vec![1.0; 256], exposure_s: 1.0 };
        let events = extract_events(&grid, &frame);
        prop_assert!(events.iter().all(|e| e.pixel_count >= 2));

        let mut shifted = vec![false; 24 * 24];
        for r in 0..16 {
            for c in 0..16 {
                shifted[(r + dy) * 24 + c + dx] = cells[r * 16 + c];
            }
        }
        let big = BinaryGrid::new(24, 24, shifted);
        let big_frame = Frame { width: 24, height: 24, values: vec![1.0; 576], exposure_s: 1.0 };
        let moved = extract_events(&big, &big_frame);
        prop_assert_eq!(moved.len(), events.len());
        for (a, b) in events.iter().zip(&moved) {
            prop_assert_eq!(a.pixel_count, b.pixel_count);
            prop_assert!((b.centroid_px.0 - a.centroid_px.0 - dx as f64).abs() < 1e-9);
            prop_assert!((b.centroid_px.1 - a.centroid_px.1 - dy as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn accumulation_is_linear_and_conserves_events(
        frames in prop::collection::vec(
            prop::collection::vec((-3.0f64..12.0, -3.0f64..12.0), 0..6), 0..12),
        cut in 0usize..12,
    ) {
        let frames: Vec<Vec<PhotonEvent>> = frames
            .into_iter()
            .map(|f| f.into_iter().map(|c| PhotonEvent { centroid_px: c, pixel_count: 2, total_mass: 1.0 }).collect())
            .collect();
        let cut = cut.min(frames.len());
        let whole = accumulate(&frames, 10, 10);
        let mut parts = accumulate(&frames[..cut], 10, 10);
        parts.merge(&accumulate(&frames[cut..], 10, 10));
        prop_assert_eq!(&whole, &parts);

        let n: usize = frames.iter().map(Vec::len).sum();
        prop_assert_eq!(whole.meta.total_events + whole.meta.dropped_events, n as u64);
        prop_assert_eq!(whole.total(), whole.meta.total_events);
        prop_assert_eq!(whole.meta.frames, frames.len() as u64);
    }

    #[test]
    fn expected_frame_sum_is_linear_in_photons(n in 0usize..40, qe in 0.05f64..1.0) {
        let model = IccdModel {
            width: 64,
            height: 64,
            quantum_efficiency: qe,
            gain_sigma: 0.0,
            dark_events_per_frame: 0.0,
            read_noise_sigma: 0.0,
            ..IccdModel::default()
        };
        let photons = vec![Vec2::ZERO; n];
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let trials = 200;
        let mean: f64 = (0..trials)
            .map(|_| iccd_expose(&photons, &model, 1.0, &mut rng).frame.sum())
            .sum::<f64>()
            / trials as f64;
        let expect = n as f64 * qe * model.gain_mean;
        let sd = model.gain_mean * (n as f64 * qe * (1.0 - qe) / trials as f64).sqrt();
        prop_assert!((mean - expect).abs() <= 5.0 * sd + 1e-3 * model.gain_mean, "{mean} vs {expect}");
    }
}

#[test]
fn nominal_cable_zeroes_the_offset() {
    assert_eq!(net_timing_offset(&TimingModel::default(), &OpticalPath::default()), 0.0);
}

#[test]
fn empirical_gate_acceptance_tracks_the_model() {
    let t = TimingModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 20_000;
    let mut last = 1.0f64;
    for i in 0..=16 {
        let dt = i as f64 * 0.5e-9;
        let plus = (0..n).filter(|_| gate_accepts(dt, &t, &mut rng)).count() as f64 / n as f64;
        let minus = (0..n).filter(|_| gate_accepts(-dt, &t, &mut rng)).count() as f64 / n as f64;
        let p = t.gate_acceptance_probability(dt);
        let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt() + 1e-3;
        assert!((plus - p).abs() <= tol && (minus - p).abs() <= tol, "dt {dt}: {plus} {minus} vs {p}");
        assert!(p <= last + 1e-12);
        last = p;
    }
}

#[test]
fn step_edge_hits_the_sampling_floor() {
    let w = edge_transition_width(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).unwrap();
    assert!((w - 0.8).abs() < 1e-12);
    assert!((w / EDGE_WIDTH_IN_SIGMA - 0.3125).abs() < 1e-12);
}

#[test]
fn threshold_examples() {
    let mut f = Frame::zeros(5, 5, 1.0);
    for r in 1..4 {
        for c in 1..4 {
            f.values[r * 5 + c] = 100.0;
        }
    }
    let ev = frame_events(&f, 50.0);
    assert_eq!(ev.len(), 1);
    assert_eq!(ev[0].centroid_px, (2.0, 2.0));
    assert_eq!(threshold_frame(&f, f64::INFINITY).count(), 0);

    let mut single = Frame::zeros(5, 5, 1.0);
    single.values[12] = 100.0;
    assert!(frame_events(&single, 50.0).is_empty());

    let n = 9;
    let img = accumulate((0..n).map(|_| ev.clone()), 5, 5);
    assert_eq!(img.get(2, 2), n);
}

#[test]
fn read_noise_alone_yields_no_events() {
    let model = IccdModel::default();
    let theta = 5.0 * model.read_noise_sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let frames = 100;
    let mut clean = 0;
    for _ in 0..frames {
        let mut f = Frame::zeros(model.width, model.height, 1.0);
        add_read_noise(&mut f, &model, &mut rng);
        if frame_events(&f, theta).is_empty() {
            clean += 1;
        }
    }
    assert!(clean as f64 >= 0.99 * frames as f64, "{clean}/{frames}");
}

#[test]
fn skull_pass_rate_matches_mean_transmittance() {
    let (_, bytes) = BUILTIN_MASKS.iter().find(|(n, _)| *n == "skull.pgm").unwrap();
    let img = decode_gray(bytes).unwrap();
    let t = img.data.iter().map(|&v| v as f64 / img.maxval as f64).collect();
    let mask = ObjectMask::new(GridGeometry::new(img.width, img.height, 13e-6), t).unwrap();
    let (lo, hi) = mask.geometry.bounds();
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let n = 1_000_000;
    let mut pass = 0usize;
    for _ in 0..n {
        let p = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if mask_transmit(&mask, p, &mut rng) {
            pass += 1;
        }
    }
    let rate = pass as f64 / n as f64;
    assert!(close(rate, mask.mean(), 0.02), "{rate} vs {}", mask.mean());
}
