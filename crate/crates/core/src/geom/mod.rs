//! Rotation and pose algebra, the pinhole camera, triangulation and
//! trajectory alignment.

mod alignment;
mod camera;
mod pose;
mod rotation;
mod triangulation;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alignment::{align_trajectories, Alignment, AlignmentMode};
pub use camera::PinholeCamera;
pub use pose::{renormalize, Pose};
pub use rotation::{
    canonical, quat_from_rotvec, right_jacobian, rotation_angle_between, rotation_between, rotvec_from_quat, skew,
    yaw_of,
};
pub(crate) use rotation::{quat_left_block, quat_right_block};
pub use triangulation::{triangulate, RayQuality, Triangulation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("point has non-positive depth {0}")]
    NonPositiveDepth(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(&'static str),
    #[error("need at least 2 poses to align, got {0}")]
    InsufficientPoses(usize),
    #[error("trajectory lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

/// Point parameterized by inverse depth along the ray of its first
/// observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub anchor_frame: usize,
    /// Normalized image coordinates of the anchor observation.
    pub anchor_observation: Vector2<f64>,
    pub inverse_depth: f64,
}

impl Landmark {
    pub fn is_valid(&self) -> bool {
        self.inverse_depth > 0.0 && self.inverse_depth.is_finite()
    }

    /// World point given the anchor camera's camera-to-world pose.
    pub fn world_point(&self, anchor_pose: &Pose) -> nalgebra::Vector3<f64> {
        let ray = nalgebra::Vector3::new(self.anchor_observation.x, self.anchor_observation.y, 1.0);
        anchor_pose.transform_point(&(ray / self.inverse_depth))
    }
}
