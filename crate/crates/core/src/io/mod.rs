//! EuRoC ASL ingestion, track files, fragment splitting and configuration.

mod config;
mod euroc;
mod fragments;
mod tracks;

use std::path::PathBuf;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{BenchmarkConfig, SimulationConfig};
pub use euroc::{load_euroc, write_euroc};
pub use fragments::{split_fragments, FragmentConfig, LabeledFragment};
pub use tracks::{load_tracks, write_tracks};

use crate::geom::{PinholeCamera, Pose};
use crate::imu::{ImuNoise, ImuSample};

/// Ground-truth body state at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthState {
    /// Seconds from the sequence time origin.
    pub timestamp: f64,
    /// Body-to-world.
    pub pose: Pose,
    /// World frame, m/s.
    pub velocity: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

impl GroundTruthState {
    /// Linear interpolation of position, velocity and biases with slerp on
    /// attitude.
    pub fn interpolate(a: &Self, b: &Self, t: f64) -> Self {
        let span = b.timestamp - a.timestamp;
        let s = if span > 0.0 { ((t - a.timestamp) / span).clamp(0.0, 1.0) } else { 0.0 };
        let rotation: UnitQuaternion<f64> = a.pose.rotation.slerp(&b.pose.rotation, s);
        Self {
            timestamp: t,
            pose: Pose::new(rotation, a.pose.position.lerp(&b.pose.position, s)),
            velocity: a.velocity.lerp(&b.velocity, s),
            gyro_bias: a.gyro_bias.lerp(&b.gyro_bias, s),
            accel_bias: a.accel_bias.lerp(&b.accel_bias, s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub camera: PinholeCamera,
    /// Camera-to-IMU.
    pub extrinsic: Pose,
    pub noise: ImuNoise,
    /// Nominal IMU rate, Hz.
    pub imu_rate: f64,
    /// Nominal camera rate, Hz.
    pub camera_rate: f64,
}

/// One recording. Timestamps are seconds relative to `time_origin_ns` so
/// that sample spacing keeps full precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub time_origin_ns: i64,
    pub imu: Vec<ImuSample>,
    pub ground_truth: Vec<GroundTruthState>,
    pub camera_timestamps: Vec<f64>,
    pub calibration: Calibration,
}

impl Sequence {
    /// Absolute nanosecond timestamp of a sequence-relative time.
    pub fn to_ns(&self, t: f64) -> i64 {
        self.time_origin_ns + (t * 1e9).round() as i64
    }

    pub fn from_ns(&self, ns: i64) -> f64 {
        (ns - self.time_origin_ns) as f64 * 1e-9
    }

    /// Ground truth interpolated at `t`, if `t` lies within its span.
    pub fn ground_truth_at(&self, t: f64) -> Option<GroundTruthState> {
        let gt = &self.ground_truth;
        let hi = gt.partition_point(|s| s.timestamp < t);
        if hi == gt.len() {
            return None;
        }
        if gt[hi].timestamp == t {
            return Some(GroundTruthState { timestamp: t, ..gt[hi] });
        }
        let lo = hi.checked_sub(1)?;
        Some(GroundTruthState::interpolate(&gt[lo], &gt[hi], t))
    }
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("{file}: malformed row at line {line}")]
    MalformedRow { file: PathBuf, line: u64 },
    #[error("{file}: timestamps not increasing at line {line}")]
    NonMonotoneTimestamps { file: PathBuf, line: u64 },
    #[error("track row references unknown frame timestamp {0} ns")]
    UnknownFrameTimestamp(i64),
    #[error("{file}: {message}")]
    Metadata { file: PathBuf, message: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
