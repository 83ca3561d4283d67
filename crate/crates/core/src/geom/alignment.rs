//! Closed-form trajectory alignment used before computing absolute errors on
//! up-to-scale or gauge-free estimates.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{GeomError, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    /// Rotation, translation and uniform scale (Umeyama).
    #[default]
    Similarity,
    /// Rotation about the gravity (z) axis plus translation, unit scale.
    YawAndPosition,
}

#[derive(Debug, Clone)]
pub struct Alignment {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    /// Scale applied to the estimate.
    pub scale: f64,
    pub aligned: Vec<Pose>,
}

impl Alignment {
    pub fn apply(&self, p: &Pose) -> Pose {
        Pose::new(self.rotation * p.rotation, self.scale * (self.rotation * p.position) + self.translation)
    }
}

/// Aligns `estimate` onto `reference` in the least-squares sense over
/// positions.
pub fn align_trajectories(estimate: &[Pose], reference: &[Pose], mode: AlignmentMode) -> Result<Alignment, GeomError> {
    if estimate.len() != reference.len() {
        return Err(GeomError::LengthMismatch(estimate.len(), reference.len()));
    }
    if estimate.len() < 2 {
        return Err(GeomError::InsufficientPoses(estimate.len()));
    }
    let n = estimate.len() as f64;
    let mu_e = estimate.iter().map(|p| p.position).sum::<Vector3<f64>>() / n;
    let mu_r = reference.iter().map(|p| p.position).sum::<Vector3<f64>>() / n;

    let (rotation, scale) = match mode {
        AlignmentMode::Similarity => {
            let mut cov = Matrix3::zeros();
            let mut var_e = 0.0;
            for (e, r) in estimate.iter().zip(reference) {
                let de = e.position - mu_e;
                let dr = r.position - mu_r;
                cov += dr * de.transpose();
                var_e += de.norm_squared();
            }
            cov /= n;
            var_e /= n;
            let svd = cov.svd(true, true);
            let u = svd.u.unwrap();
            let vt = svd.v_t.unwrap();
            let sv = svd.singular_values;
            let mut s = Matrix3::identity();
            if (u * vt).determinant() < 0.0 {
                // reflection fix goes on the weakest direction
                let weakest = sv.imin();
                s[(weakest, weakest)] = -1.0;
            }
            let r = u * s * vt;
            let trace = sv[0] * s[(0, 0)] + sv[1] * s[(1, 1)] + sv[2] * s[(2, 2)];
            let scale = if var_e > 1e-30 { trace / var_e } else { 1.0 };
            let rot = UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(r));
            (rot, scale)
        }
        AlignmentMode::YawAndPosition => {
            let (mut num, mut den) = (0.0, 0.0);
            for (e, r) in estimate.iter().zip(reference) {
                let de = e.position - mu_e;
                let dr = r.position - mu_r;
                num += de.x * dr.y - de.y * dr.x;
                den += de.x * dr.x + de.y * dr.y;
            }
            let yaw = if num == 0.0 && den == 0.0 { 0.0 } else { num.atan2(den) };
            (UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw), 1.0)
        }
    };

    let translation = mu_r - scale * (rotation * mu_e);
    let mut out = Alignment { rotation, translation, scale, aligned: Vec::new() };
    out.aligned = estimate.iter().map(|p| out.apply(p)).collect();
    Ok(out)
}
