//! Stand-in for a learned block-position estimator.
//!
//! A camera whose alignment drifted by `shift_deg` perceives the scene as if
//! rotated about a vertical axis through a virtual camera pivot. On top of
//! that systematic bias, every estimate carries fresh isotropic Gaussian
//! noise whose scale is usually calibrated to a target mean error.

use nalgebra::{Rotation3, Vector3};
use rand_distr::{Distribution, StandardNormal};

use crate::rng::Rng;
use crate::{Error, Result};

/// Mean estimation error of the unshifted estimator, in metres.
pub const BASE_MEAN_ERROR: f64 = 0.014;

/// `E‖X‖ = σ · 2·sqrt(2/π)` for `X ~ N(0, σ² I₃)`.
fn chi3_mean_factor() -> f64 {
    2.0 * (2.0 / std::f64::consts::PI).sqrt()
}

/// Per-axis noise scale whose 3-D Euclidean error has mean `target_mean_error`.
pub fn calibrate_noise(target_mean_error: f64) -> Result<f64> {
    if !(target_mean_error > 0.0) || !target_mean_error.is_finite() {
        return Err(Error::Config(format!(
            "target mean error must be positive, got {target_mean_error}"
        )));
    }
    Ok(target_mean_error / chi3_mean_factor())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptionModel {
    pub shift_deg: f64,
    /// Standard deviation per axis, metres.
    pub noise_std: f64,
    pub camera_pivot: Vector3<f64>,
}

impl PerceptionModel {
    pub const DEFAULT_PIVOT: [f64; 3] = [0.0, -0.5, 0.25];

    pub fn new(shift_deg: f64, noise_std: f64) -> Result<Self> {
        let model = Self {
            shift_deg,
            noise_std,
            camera_pivot: Vector3::from(Self::DEFAULT_PIVOT),
        };
        model.validate()?;
        Ok(model)
    }

    /// Model whose noise matches `target_mean_error` at zero shift.
    pub fn calibrated(shift_deg: f64, target_mean_error: f64) -> Result<Self> {
        Self::new(shift_deg, calibrate_noise(target_mean_error)?)
    }

    /// Exact estimator: no shift, no noise.
    pub fn perfect() -> Self {
        Self {
            shift_deg: 0.0,
            noise_std: 0.0,
            camera_pivot: Vector3::from(Self::DEFAULT_PIVOT),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(Error::Config(format!("noise std must be >= 0, got {}", self.noise_std)));
        }
        if !self.shift_deg.is_finite() {
            return Err(Error::Config("camera shift must be finite".into()));
        }
        Ok(())
    }

    /// Systematic part of the estimate: rotation about the pivot's vertical axis.
    pub fn biased_position(&self, true_pos: &Vector3<f64>) -> Vector3<f64> {
        if self.shift_deg == 0.0 {
            return *true_pos;
        }
        let rot = Rotation3::from_axis_angle(&Vector3::z_axis(), self.shift_deg.to_radians());
        let mut p = self.camera_pivot + rot * (true_pos - self.camera_pivot);
        // The rotation axis is vertical; keep the height bit-exact.
        p.z = true_pos.z;
        p
    }

    /// One noisy estimate. Always draws three normals so the stream advances
    /// identically whatever the noise scale.
    pub fn estimate(&self, true_pos: &Vector3<f64>, rng: &mut Rng) -> Vector3<f64> {
        let noise = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let noise: Vector3<f64> = noise * self.noise_std;
        self.biased_position(true_pos) + noise
    }
}
