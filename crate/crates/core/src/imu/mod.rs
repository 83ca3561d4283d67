//! IMU measurement model, pre-integration, the IMU residual and static
//! initialization.

mod preintegration;
mod residual;
mod static_init;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Pose;

pub use preintegration::{gyro_rotation_prior, preintegrate, preintegrate_between, samples_between, Preintegration};
pub use residual::{camera_rotation_prior, imu_residual, imu_residual_jacobians, ImuJacobians};
pub use static_init::{detect_static, static_init, StaticInit, StaticThresholds};

/// Nominal gravity magnitude, m/s².
pub const GRAVITY_MAGNITUDE: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImuError {
    #[error("IMU window has fewer than 2 samples")]
    EmptyWindow,
    #[error("IMU timestamps not strictly increasing at sample {0}")]
    NonMonotoneTimestamps(usize),
    #[error("bias delta {0} exceeds the first-order correction range")]
    BiasDeltaTooLarge(f64),
    #[error("static window of {0:.3} s is shorter than required")]
    WindowTooShort(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    /// Seconds.
    pub timestamp: f64,
    /// Angular velocity, rad/s.
    pub gyro: Vector3<f64>,
    /// Specific force, m/s².
    pub accel: Vector3<f64>,
}

impl ImuSample {
    pub fn new(timestamp: f64, gyro: Vector3<f64>, accel: Vector3<f64>) -> Self {
        Self { timestamp, gyro, accel }
    }

    pub fn is_finite(&self) -> bool {
        self.timestamp.is_finite() && self.gyro.iter().chain(self.accel.iter()).all(|v| v.is_finite())
    }

    /// Linear interpolation between two samples at time `t`.
    pub fn lerp(a: &ImuSample, b: &ImuSample, t: f64) -> ImuSample {
        let span = b.timestamp - a.timestamp;
        let s = if span > 0.0 { (t - a.timestamp) / span } else { 0.0 };
        ImuSample { timestamp: t, gyro: a.gyro.lerp(&b.gyro, s), accel: a.accel.lerp(&b.accel, s) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BiasState {
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

impl BiasState {
    pub fn new(gyro_bias: Vector3<f64>, accel_bias: Vector3<f64>) -> Self {
        Self { gyro_bias, accel_bias }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_finite(&self) -> bool {
        self.gyro_bias.iter().chain(self.accel_bias.iter()).all(|v| v.is_finite())
    }

    /// Logs a warning when either bias looks implausibly large.
    pub fn check_sanity(&self) -> bool {
        let ok = self.gyro_bias.norm() < 1.0 && self.accel_bias.norm() < 1.0;
        if !ok {
            log::warn!("bias magnitude out of range: gyro {:?} accel {:?}", self.gyro_bias, self.accel_bias);
        }
        ok
    }

    /// Largest absolute component of `self - other`.
    pub fn max_abs_delta(&self, other: &BiasState) -> f64 {
        (self.gyro_bias - other.gyro_bias).amax().max((self.accel_bias - other.accel_bias).amax())
    }
}

/// Continuous-time noise densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImuNoise {
    /// rad/s/√Hz
    pub gyro_noise_density: f64,
    /// rad/s²/√Hz
    pub gyro_random_walk: f64,
    /// m/s²/√Hz
    pub accel_noise_density: f64,
    /// m/s³/√Hz
    pub accel_random_walk: f64,
}

impl Default for ImuNoise {
    /// EuRoC ADIS16448 calibration.
    fn default() -> Self {
        Self {
            gyro_noise_density: 1.6968e-4,
            gyro_random_walk: 1.9393e-5,
            accel_noise_density: 2.0e-3,
            accel_random_walk: 3.0e-3,
        }
    }
}

impl ImuNoise {
    pub fn is_valid(&self) -> bool {
        [self.gyro_noise_density, self.gyro_random_walk, self.accel_noise_density, self.accel_random_walk]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
    }
}

/// Gravity vector, m/s².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GravityVector(pub Vector3<f64>);

impl GravityVector {
    /// `(0, 0, 9.81)`: the world frame has z pointing up and the
    /// accelerometer reads `+g` at rest.
    pub fn nominal() -> Self {
        Self(Vector3::new(0.0, 0.0, GRAVITY_MAGNITUDE))
    }

    pub fn magnitude(&self) -> f64 {
        self.0.norm()
    }

    pub fn direction(&self) -> Vector3<f64> {
        self.0.normalize()
    }

    pub fn is_plausible(&self) -> bool {
        (9.0..=10.5).contains(&self.magnitude())
    }
}

/// Body state at one keyframe.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState {
    /// Body-to-world pose.
    pub pose: Pose,
    /// World-frame velocity.
    pub velocity: Vector3<f64>,
    pub bias: BiasState,
}

impl NavState {
    pub fn new(pose: Pose, velocity: Vector3<f64>, bias: BiasState) -> Self {
        Self { pose, velocity, bias }
    }
}
