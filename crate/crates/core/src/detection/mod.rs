//! Object mask, bucket detector and intensified camera.

mod iccd;
mod mask;

pub use iccd::{
    add_read_noise, deposit_dark_events, deposit_photons, iccd_expose, Exposure, Frame,
    IccdModel,
};
pub use mask::{load_mask, make_pinhole_mask, mask_transmit, ObjectMask};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spdc::PlaneConfig;

/// Lens, multimode fibre and SPAD behind the object, lumped into one efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketDetector {
    pub efficiency: f64,
    pub max_trigger_rate_hz: f64,
}

impl BucketDetector {
    /// Trigger-rate ceiling matching the rate run in each configuration.
    pub fn for_plane(plane: PlaneConfig) -> Self {
        BucketDetector {
            efficiency: 0.5,
            max_trigger_rate_hz: match plane {
                PlaneConfig::PositionCorrelated => 15e3,
                PlaneConfig::MomentumAntiCorrelated => 10e3,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config("bucket.efficiency", "must lie in [0, 1]"));
        }
        if !(self.max_trigger_rate_hz.is_finite() && self.max_trigger_rate_hz > 0.0) {
            return Err(Error::config("bucket.max_trigger_rate_hz", "must be > 0"));
        }
        Ok(())
    }
}

impl Default for BucketDetector {
    fn default() -> Self {
        Self::for_plane(PlaneConfig::PositionCorrelated)
    }
}

/// Whether a photon that reached the bucket produces a trigger pulse.
pub fn bucket_detect<R: Rng + ?Sized>(passed: bool, det: &BucketDetector, rng: &mut R) -> bool {
    passed && rng.random::<f64>() < det.efficiency
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bucket_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut det = BucketDetector::default();
        assert!(!bucket_detect(false, &det, &mut rng));
        det.efficiency = 1.0;
        assert!((0..1000).all(|_| bucket_detect(true, &det, &mut rng)));
        det.efficiency = 0.3;
        let n = 100_000;
        let hits = (0..n).filter(|_| bucket_detect(true, &det, &mut rng)).count();
        assert!((hits as f64 / n as f64 - 0.3).abs() < 0.01);
    }

    #[test]
    fn presets_follow_plane() {
        assert_eq!(BucketDetector::for_plane(PlaneConfig::PositionCorrelated).max_trigger_rate_hz, 15e3);
        assert_eq!(BucketDetector::for_plane(PlaneConfig::MomentumAntiCorrelated).max_trigger_rate_hz, 10e3);
        assert!(BucketDetector { efficiency: 1.5, ..Default::default() }.validate().is_err());
    }
}
