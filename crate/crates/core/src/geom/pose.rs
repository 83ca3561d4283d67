use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

/// Rigid transform from a local (body or camera) frame into a parent frame.
///
/// `rotation` maps local coordinates into the parent frame and `position` is
/// the local origin expressed in the parent frame, so a local point `x` lands
/// at `rotation * x + position`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub position: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, position: Vector3<f64>) -> Self {
        Self { rotation, position }
    }

    pub fn identity() -> Self {
        Self { rotation: UnitQuaternion::identity(), position: Vector3::zeros() }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose { rotation: inv, position: -(inv * self.position) }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: renormalize(self.rotation * other.rotation),
            position: self.rotation * other.position + self.position,
        }
    }

    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * x + self.position
    }

    pub fn inverse_transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.inverse() * (x - self.position)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite()) && self.rotation.coords.iter().all(|v| v.is_finite())
    }
}

/// Re-projects a quaternion onto the unit sphere to stop drift from repeated
/// products.
pub fn renormalize(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}
