//! Two-photon source model.
//!
//! The down-converted pair is described in the object and camera planes by a
//! joint Gaussian: a broad marginal width set by the illumination and a narrow
//! conditional width set by the pair correlation length. The sign of the
//! correlation distinguishes the image-plane (position-correlated) and
//! far-field (momentum anti-correlated) configurations.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use crate::error::{require_positive, Error, Result};
use crate::geom::{Sign, Vec2};

/// Gaussian-approximation factor for the sinc phase-matching function.
pub const PHASE_MATCHING_GAUSSIAN_FACTOR: f64 = 0.455;

/// Measured illumination width at the object/camera plane, image-plane configuration.
pub const POSITION_FIELD_WIDTH: f64 = 1.83e-3;
/// Measured illumination width at the object/camera plane, far-field configuration.
pub const MOMENTUM_FIELD_WIDTH: f64 = 3.06e-3;

/// Physical constants of the source and the two imaging configurations. SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdcParams {
    pub lambda_pump: f64,
    pub lambda_down: f64,
    pub crystal_length: f64,
    /// Full width at half maximum of the pump *intensity* at the crystal.
    pub pump_fwhm_intensity: f64,
    pub magnification: f64,
    pub effective_focal_length: f64,
}

impl Default for SpdcParams {
    fn default() -> Self {
        SpdcParams {
            lambda_pump: 355e-9,
            lambda_down: 710e-9,
            crystal_length: 3e-3,
            pump_fwhm_intensity: 1.2e-3,
            magnification: 3.0,
            effective_focal_length: 0.300,
        }
    }
}

impl SpdcParams {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("spdc.lambda_pump", self.lambda_pump),
            ("spdc.lambda_down", self.lambda_down),
            ("spdc.crystal_length", self.crystal_length),
            ("spdc.pump_fwhm_intensity", self.pump_fwhm_intensity),
            ("spdc.magnification", self.magnification),
            ("spdc.effective_focal_length", self.effective_focal_length),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, format!("must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// True when the down-converted photons sit at twice the pump wavelength.
    pub fn is_degenerate(&self) -> bool {
        ((self.lambda_down - 2.0 * self.lambda_pump) / self.lambda_down).abs() <= 1e-12
    }

    pub fn pump_wavenumber(&self) -> f64 {
        2.0 * PI / self.lambda_pump
    }

    pub fn down_wavenumber(&self) -> f64 {
        2.0 * PI / self.lambda_down
    }

    /// Standard deviation of the pump *amplitude* whose intensity profile has
    /// the configured FWHM: `FWHM / (2 sqrt(ln 2))`.
    pub fn pump_amplitude_sigma(&self) -> f64 {
        self.pump_fwhm_intensity / (2.0 * std::f64::consts::LN_2.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PlaneConfig {
    /// Object and camera in image planes of the crystal.
    PositionCorrelated,
    /// Object and camera in the far field of the crystal.
    MomentumAntiCorrelated,
}

impl PlaneConfig {
    pub fn correlation_sign(self) -> Sign {
        match self {
            PlaneConfig::PositionCorrelated => Sign::Positive,
            PlaneConfig::MomentumAntiCorrelated => Sign::Negative,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlaneConfig::PositionCorrelated => "position",
            PlaneConfig::MomentumAntiCorrelated => "momentum",
        }
    }
}

impl fmt::Display for PlaneConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlaneConfig {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "position" | "position-correlated" | "image-plane" => {
                Ok(PlaneConfig::PositionCorrelated)
            }
            "momentum" | "momentum-anticorrelated" | "far-field" => {
                Ok(PlaneConfig::MomentumAntiCorrelated)
            }
            other => Err(format!(
                "unknown plane mode `{other}` (expected `position` or `momentum`)"
            )),
        }
    }
}

/// Pair state at the object/camera planes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointGaussian {
    /// Per-axis standard deviation of the camera-photon position.
    pub gamma_marginal: f64,
    /// Per-axis standard deviation of the object photon about its partner.
    pub sigma_cond: f64,
    pub corr_sign: Sign,
}

impl JointGaussian {
    pub fn new(gamma_marginal: f64, sigma_cond: f64, corr_sign: Sign) -> Result<Self> {
        if !(gamma_marginal.is_finite() && gamma_marginal > 0.0) {
            return Err(Error::config(
                "state.gamma_marginal",
                format!("must be > 0, got {gamma_marginal}"),
            ));
        }
        if !(sigma_cond.is_finite() && sigma_cond >= 0.0) {
            return Err(Error::config(
                "state.sigma_cond",
                format!("must be >= 0, got {sigma_cond}"),
            ));
        }
        if sigma_cond >= gamma_marginal {
            return Err(Error::config(
                "state.sigma_cond",
                format!(
                    "conditional width {sigma_cond} must be smaller than the marginal width {gamma_marginal}"
                ),
            ));
        }
        Ok(JointGaussian {
            gamma_marginal,
            sigma_cond,
            corr_sign,
        })
    }

    /// Per-axis standard deviation of the object-photon marginal.
    pub fn object_marginal_sigma(&self) -> f64 {
        self.gamma_marginal.hypot(self.sigma_cond)
    }

    /// Draws the camera photon given where its partner hit the object plane.
    ///
    /// Inverse of the forward factorization: for `rho_obj = s * rho_cam + e`
    /// the camera position given `rho_obj` is Gaussian with mean
    /// `s * G^2 / (G^2 + S^2) * rho_obj` and variance `G^2 S^2 / (G^2 + S^2)`.
    pub fn sample_camera_given_object<R: Rng + ?Sized>(&self, rho_obj: Vec2, rng: &mut R) -> Vec2 {
        let g2 = self.gamma_marginal * self.gamma_marginal;
        let s2 = self.sigma_cond * self.sigma_cond;
        let shrink = g2 / (g2 + s2);
        let sd = (g2 * s2 / (g2 + s2)).sqrt();
        let mean = self.corr_sign.apply(rho_obj) * shrink;
        mean + gaussian_pair(rng) * sd
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WidthOverrides {
    pub gamma_marginal: Option<f64>,
    pub sigma_cond: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairSample {
    pub rho_obj: Vec2,
    pub rho_cam: Vec2,
    pub t_emit: f64,
}

/// Conditional (correlation-length) width in the image-plane configuration:
/// `(M / sqrt 2) * sqrt(0.455 L / k_p)` with `k_p = 2 pi / lambda_pump`.
pub fn correlation_length_image_plane(
    crystal_length: f64,
    lambda_pump: f64,
    magnification: f64,
) -> Result<f64> {
    require_positive("crystal length", crystal_length)?;
    require_positive("pump wavelength", lambda_pump)?;
    require_positive("magnification", magnification)?;
    let k_p = 2.0 * PI / lambda_pump;
    Ok(magnification / SQRT_2 * (PHASE_MATCHING_GAUSSIAN_FACTOR * crystal_length / k_p).sqrt())
}

/// Conditional width in the far-field configuration:
/// `(1 / sqrt 2) * f_e / (sigma_p k)` with `k = 2 pi / lambda_down` and
/// `sigma_p` the pump amplitude standard deviation.
pub fn correlation_length_far_field(
    effective_focal_length: f64,
    pump_amplitude_sigma: f64,
    lambda_down: f64,
) -> Result<f64> {
    require_positive("effective focal length", effective_focal_length)?;
    require_positive("pump amplitude sigma", pump_amplitude_sigma)?;
    require_positive("down-converted wavelength", lambda_down)?;
    let k = 2.0 * PI / lambda_down;
    Ok(effective_focal_length / (pump_amplitude_sigma * k) / SQRT_2)
}

pub fn derive_joint_gaussian(
    params: &SpdcParams,
    config: PlaneConfig,
    overrides: &WidthOverrides,
) -> Result<JointGaussian> {
    params.validate()?;
    let (gamma, sigma) = match config {
        PlaneConfig::PositionCorrelated => (
            POSITION_FIELD_WIDTH,
            correlation_length_image_plane(
                params.crystal_length,
                params.lambda_pump,
                params.magnification,
            )?,
        ),
        PlaneConfig::MomentumAntiCorrelated => (
            MOMENTUM_FIELD_WIDTH,
            correlation_length_far_field(
                params.effective_focal_length,
                params.pump_amplitude_sigma(),
                params.lambda_down,
            )?,
        ),
    };
    JointGaussian::new(
        overrides.gamma_marginal.unwrap_or(gamma),
        overrides.sigma_cond.unwrap_or(sigma),
        config.correlation_sign(),
    )
}

/// Draws one pair: the camera photon from the marginal, the object photon
/// from the conditional about `corr_sign * rho_cam`.
pub fn sample_pair<R: Rng + ?Sized>(state: &JointGaussian, rng: &mut R, frame_exposure: f64) -> PairSample {
    let rho_cam = gaussian_pair(rng) * state.gamma_marginal;
    let rho_obj = state.corr_sign.apply(rho_cam) + gaussian_pair(rng) * state.sigma_cond;
    let t_emit = rng.random::<f64>() * frame_exposure;
    PairSample {
        rho_obj,
        rho_cam,
        t_emit,
    }
}

/// Product of the inferred source-plane variances in units of hbar^2:
/// `((sigma_pos / M) * (k / f_e) * sigma_mom)^2`. Values below 0.25 violate
/// the separability bound.
pub fn epr_variance_product(
    sigma_pos_cam: f64,
    sigma_mom_cam: f64,
    magnification: f64,
    effective_focal_length: f64,
    lambda_down: f64,
) -> Result<f64> {
    require_positive("position width", sigma_pos_cam)?;
    require_positive("momentum width", sigma_mom_cam)?;
    require_positive("magnification", magnification)?;
    require_positive("effective focal length", effective_focal_length)?;
    require_positive("down-converted wavelength", lambda_down)?;
    let k = 2.0 * PI / lambda_down;
    let delta_pos = sigma_pos_cam / magnification;
    let delta_mom = k / effective_focal_length * sigma_mom_cam;
    Ok((delta_pos * delta_mom).powi(2))
}

pub const EPR_BOUND: f64 = 0.25;

pub(crate) fn gaussian_pair<R: Rng + ?Sized>(rng: &mut R) -> Vec2 {
    Vec2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}
