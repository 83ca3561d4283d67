use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{BiasState, ImuError, ImuSample, GRAVITY_MAGNITUDE};
use crate::geom::rotation_between;
use crate::matching::FeatureTrack;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StaticThresholds {
    /// Mean feature displacement, pixels.
    pub max_displacement_px: f64,
    /// Standard deviation of the specific-force norm deviation, m/s².
    pub max_accel_std: f64,
    /// Standard deviation of the angular-rate deviation, rad/s.
    pub max_gyro_std: f64,
    /// Minimum span of samples for static initialization, s.
    pub min_window_s: f64,
}

impl Default for StaticThresholds {
    fn default() -> Self {
        Self { max_displacement_px: 0.5, max_accel_std: 0.2, max_gyro_std: 0.02, min_window_s: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticInit {
    /// Gravity as seen in the body frame, m/s².
    pub gravity_body: Vector3<f64>,
    pub bias: BiasState,
}

impl StaticInit {
    /// Body-to-world rotation with zero yaw that maps measured gravity onto
    /// world +z.
    pub fn attitude(&self) -> UnitQuaternion<f64> {
        rotation_between(&self.gravity_body, &Vector3::z())
    }
}

fn std_dev(values: impl Iterator<Item = Vector3<f64>> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    if n < 2.0 {
        return 0.0;
    }
    let mean = values.clone().sum::<Vector3<f64>>() / n;
    (values.map(|v| (v - mean).norm_squared()).sum::<f64>() / n).sqrt()
}

/// Mean first-to-last pixel displacement over tracks with at least two
/// observations; zero when there are none.
fn mean_displacement(tracks: &[FeatureTrack]) -> f64 {
    let d: Vec<f64> = tracks
        .iter()
        .filter(|t| t.len() >= 2)
        .map(|t| (t.last().unwrap().pixel - t.first().unwrap().pixel).norm())
        .collect();
    if d.is_empty() {
        0.0
    } else {
        d.iter().sum::<f64>() / d.len() as f64
    }
}

/// True when features barely move and both IMU streams are quiet.
pub fn detect_static(tracks: &[FeatureTrack], samples: &[ImuSample], thresholds: &StaticThresholds) -> bool {
    if samples.is_empty() {
        return false;
    }
    let accel_std = std_dev(samples.iter().map(|s| s.accel));
    let gyro_std = std_dev(samples.iter().map(|s| s.gyro));
    let disp = mean_displacement(tracks);
    log::debug!("static check: disp {disp:.3} px, accel std {accel_std:.4}, gyro std {gyro_std:.4}");
    disp < thresholds.max_displacement_px && accel_std < thresholds.max_accel_std && gyro_std < thresholds.max_gyro_std
}

/// Gravity direction and biases from a window at rest.
pub fn static_init(samples: &[ImuSample], min_window_s: f64) -> Result<StaticInit, ImuError> {
    if samples.len() < 2 {
        return Err(ImuError::EmptyWindow);
    }
    let span = samples[samples.len() - 1].timestamp - samples[0].timestamp;
    if span < min_window_s {
        return Err(ImuError::WindowTooShort(span));
    }
    let n = samples.len() as f64;
    let mean_acc = samples.iter().map(|s| s.accel).sum::<Vector3<f64>>() / n;
    let mean_gyro = samples.iter().map(|s| s.gyro).sum::<Vector3<f64>>() / n;
    let gravity_body = mean_acc.normalize() * GRAVITY_MAGNITUDE;
    Ok(StaticInit { gravity_body, bias: BiasState::new(mean_gyro, mean_acc - gravity_body) })
}
