//! The Gaussian phase-matching approximation against the sinc model.
//!
//! The position correlation width follows from the Fourier transform of
//! the phase-matching function sinc(L q^2 / (4 k_p)). Its second moment
//! diverges (the transform falls off as a power law), so the comparison uses
//! the FWHM-equivalent standard deviation of |FT|^2 along one axis.

use std::f64::consts::PI;

use ghostim::spdc::{correlation_length_image_plane, SpdcParams};
use rustfft::{num_complex::Complex, FftPlanner};

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// FWHM-equivalent sigma of |FT{g}|^2, with `g` sampled on `n` points of
/// spacing `dq` centred on zero and the transform taken in the conjugate
/// variable rho (kernel exp(i q rho)).
fn ft_intensity_sigma(g: impl Fn(f64) -> f64, n: usize, dq: f64) -> f64 {
    let mut buf: Vec<Complex<f64>> = (0..n)
        .map(|i| {
            // ifftshift: index 0 holds q = 0
            let k = if i < n / 2 { i as f64 } else { i as f64 - n as f64 };
            Complex::new(g(k * dq), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let intensity: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
    let drho = 2.0 * PI / (n as f64 * dq);
    let half = intensity[0] / 2.0;
    // symmetric about rho = 0; find the first crossing on the positive side
    let i = (1..n / 2).find(|&i| intensity[i] < half).expect("no half-maximum crossing");
    let x = (i - 1) as f64 + (intensity[i - 1] - half) / (intensity[i - 1] - intensity[i]);
    2.0 * x * drho / FWHM_PER_SIGMA
}

#[test]
fn sinc_width_matches_gaussian_approximation() {
    let p = SpdcParams::default();
    let k_p = 2.0 * PI / p.lambda_pump;
    let b = p.crystal_length / (4.0 * k_p);
    let n = 1 << 20;
    let dq = 120.0 / b.sqrt() / n as f64;
    let sinc_sigma = ft_intensity_sigma(|q| sinc(b * q * q), n, dq);
    let formula = correlation_length_image_plane(p.crystal_length, p.lambda_pump, 1.0).unwrap();
    let rel = sinc_sigma / formula - 1.0;
    assert!(rel.abs() <= 0.15, "sinc {sinc_sigma:.4e} vs Gaussian {formula:.4e} ({rel:+.3})");
    // the agreement is in fact much closer than the tolerance
    assert!(rel.abs() < 0.02, "{rel}");
}

#[test]
fn gaussian_transform_reproduces_its_own_width() {
    // exp(-a q^2) transforms to a Gaussian with intensity sigma sqrt(a)
    let a: f64 = 2.5e-12;
    let n = 1 << 16;
    let dq = 40.0 / a.sqrt() / n as f64;
    let s = ft_intensity_sigma(|q| (-a * q * q).exp(), n, dq);
    assert!((s / a.sqrt() - 1.0).abs() < 1e-3, "{}", s / a.sqrt());
}
