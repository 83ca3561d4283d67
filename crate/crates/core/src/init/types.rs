use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Landmark, PinholeCamera, Pose};
use crate::imu::{ImuError, ImuSample};
use crate::matching::FeatureTrack;

/// Bounded window of keyframes; the unit of initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    /// Keyframe timestamps, seconds.
    pub keyframes: Vec<f64>,
    /// Tracks whose observation frame ids index into `keyframes`.
    pub tracks: Vec<FeatureTrack>,
    /// IMU samples covering the keyframe span.
    pub imu: Vec<ImuSample>,
    pub camera: PinholeCamera,
    /// Camera-to-IMU transform.
    pub extrinsic: Pose,
}

impl Fragment {
    pub fn num_keyframes(&self) -> usize {
        self.keyframes.len()
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.keyframes.len() < 4 {
            return Err(format!("{} keyframes, need at least 4", self.keyframes.len()));
        }
        if !self.keyframes.windows(2).all(|w| w[1] > w[0]) {
            return Err("keyframe timestamps not increasing".into());
        }
        let (Some(first), Some(last)) = (self.imu.first(), self.imu.last()) else {
            return Err("no IMU samples".into());
        };
        let eps = 1e-6;
        if first.timestamp > self.keyframes[0] + eps || last.timestamp < self.keyframes[self.keyframes.len() - 1] - eps
        {
            return Err("IMU samples do not cover the keyframe span".into());
        }
        for t in &self.tracks {
            if t.len() < 2 {
                return Err(format!("track {} has fewer than 2 observations", t.id));
            }
            if t.observations.iter().any(|o| o.frame >= self.keyframes.len()) {
                return Err(format!("track {} references a frame outside the fragment", t.id));
            }
        }
        Ok(())
    }
}

/// Up-to-scale reconstruction expressed in the first camera's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SfmEstimate {
    /// Camera-to-c0 poses, one per keyframe.
    pub camera_poses: Vec<Pose>,
    pub landmarks: Vec<Landmark>,
    /// Index into the fragment's tracks for each landmark.
    pub landmark_tracks: Vec<usize>,
    pub gyro_bias: Vector3<f64>,
    /// Per track, per observation.
    pub inlier_mask: Vec<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitState {
    /// Body-frame velocities, one per keyframe, m/s.
    pub velocities: Vec<Vector3<f64>>,
    pub scale: f64,
    /// Gravity in the first camera frame, m/s².
    pub gravity_c0: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
}

impl InitState {
    pub fn is_valid(&self) -> bool {
        let g = self.gravity_c0.norm();
        self.scale > 0.0 && self.scale.is_finite() && (9.0..=10.5).contains(&g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FailureStage {
    /// Static dispatch taken but static initialization failed.
    Static,
    /// IMU pre-integration of the fragment failed.
    Preprocess,
    TwoView,
    PnP,
    VGBA,
    Align,
    VIBA,
}

impl FailureStage {
    pub const ALL: [FailureStage; 7] = [
        FailureStage::Static,
        FailureStage::Preprocess,
        FailureStage::TwoView,
        FailureStage::PnP,
        FailureStage::VGBA,
        FailureStage::Align,
        FailureStage::VIBA,
    ];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.as_str() == s)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FailureStage::Static => "static",
            FailureStage::Preprocess => "preprocess",
            FailureStage::TwoView => "two_view",
            FailureStage::PnP => "pnp",
            FailureStage::VGBA => "vg_ba",
            FailureStage::Align => "align",
            FailureStage::VIBA => "vi_ba",
        }
    }
}

/// Per-solve optimizer diagnostics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub stage: String,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitReport {
    pub success: bool,
    pub failure_stage: Option<FailureStage>,
    pub failure_reason: Option<String>,
    /// Metric, gravity-aligned body-to-world poses.
    pub metric_poses: Vec<Pose>,
    /// World-frame velocities matching `metric_poses`.
    pub world_velocities: Vec<Vector3<f64>>,
    pub state: Option<InitState>,
    /// Parallax of the selected keyframe pair, pixels.
    pub parallax_px: f64,
    pub used_static_path: bool,
    pub diagnostics: Vec<SolveDiagnostics>,
    /// Wall time per stage, milliseconds.
    pub stage_times_ms: Vec<(FailureStage, f64)>,
}

impl InitReport {
    pub(crate) fn new() -> Self {
        Self {
            success: false,
            failure_stage: None,
            failure_reason: None,
            metric_poses: Vec::new(),
            world_velocities: Vec::new(),
            state: None,
            parallax_px: 0.0,
            used_static_path: false,
            diagnostics: Vec::new(),
            stage_times_ms: Vec::new(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("best keyframe pair shares only {0} tracks")]
    InsufficientCommonTracks(usize),
    #[error("need at least 2 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("no consensus: inlier ratio {0:.3}")]
    NoConsensus(f64),
    #[error("translation unobservable: median compensated parallax {0:.3} px")]
    DegenerateMotion(f64),
    #[error("only {0} landmarks triangulated")]
    TooFewLandmarks(usize),
    #[error("frame {frame} has {count} usable observations")]
    InsufficientObservations { frame: usize, count: usize },
    #[error("optimizer diverged")]
    Diverged,
    #[error("normal equations are rank deficient")]
    RankDeficient,
    #[error("non-positive scale {0}")]
    NonPositiveScale(f64),
    #[error("linear system ill-conditioned (condition number {0:.3e})")]
    IllConditioned(f64),
    #[error(transparent)]
    Imu(#[from] ImuError),
}
