use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::GeomError;

/// Undistorted pinhole intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, GeomError> {
        let cam = Self { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    /// EuRoC cam0 intrinsics.
    pub fn euroc() -> Self {
        Self { fx: 458.654, fy: 457.296, cx: 367.215, cy: 248.375, width: 752, height: 480 }
    }

    pub fn validate(&self) -> Result<(), GeomError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeomError::InvalidIntrinsics("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx <= self.width as f64 && self.cy >= 0.0 && self.cy <= self.height as f64) {
            return Err(GeomError::InvalidIntrinsics("principal point outside image"));
        }
        Ok(())
    }

    pub fn mean_focal(&self) -> f64 {
        0.5 * (self.fx + self.fy)
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point to pixels.
    pub fn project(&self, p: &Vector3<f64>) -> Result<Vector2<f64>, GeomError> {
        if p.z <= 0.0 {
            return Err(GeomError::NonPositiveDepth(p.z));
        }
        Ok(self.normalized_to_pixel(&Vector2::new(p.x / p.z, p.y / p.z)))
    }

    /// Jacobian of [`Self::project`] with respect to the camera-frame point.
    pub fn project_jacobian(&self, p: &Vector3<f64>) -> Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        Matrix2x3::new(self.fx * iz, 0.0, -self.fx * p.x * iz2, 0.0, self.fy * iz, -self.fy * p.y * iz2)
    }

    pub fn normalized_to_pixel(&self, n: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new(self.fx * n.x + self.cx, self.fy * n.y + self.cy)
    }

    pub fn pixel_to_normalized(&self, px: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((px.x - self.cx) / self.fx, (px.y - self.cy) / self.fy)
    }

    /// Back-projects a pixel to the point on the ray with unit depth.
    pub fn back_project(&self, px: &Vector2<f64>) -> Vector3<f64> {
        let n = self.pixel_to_normalized(px);
        Vector3::new(n.x, n.y, 1.0)
    }

    pub fn contains(&self, px: &Vector2<f64>, margin: f64) -> bool {
        px.x >= margin && px.y >= margin && px.x <= self.width as f64 - margin && px.y <= self.height as f64 - margin
    }
}
