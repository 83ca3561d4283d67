//! Visual and gyroscope residuals shared by the optimizers. Pose tangents
//! are ordered `(δp, δθ)` with rotations perturbed on the right.

use nalgebra::{Matrix2x3, Matrix3, SMatrix, UnitQuaternion, Vector2, Vector3};

use crate::geom::{quat_from_rotvec, quat_left_block, quat_right_block, right_jacobian, skew, PinholeCamera, Pose};
use crate::imu::Preintegration;

pub type Matrix2x6 = SMatrix<f64, 2, 6>;

#[derive(Debug, Clone, Copy)]
pub struct Reprojection {
    /// Predicted minus observed, pixels.
    pub residual: Vector2<f64>,
    pub d_anchor: Matrix2x6,
    pub d_target: Matrix2x6,
    pub d_inverse_depth: Vector2<f64>,
}

fn anchored_point(anchor: &Pose, anchor_obs: &Vector2<f64>, rho: f64) -> (Vector3<f64>, Vector3<f64>) {
    let ray = Vector3::new(anchor_obs.x, anchor_obs.y, 1.0);
    let local = ray / rho;
    (anchor.transform_point(&local), local)
}

/// Residual of an inverse-depth landmark anchored in `anchor` and seen in
/// `target`; `None` when the point is not in front of the target camera.
pub fn reprojection_residual(
    camera: &PinholeCamera,
    anchor: &Pose,
    target: &Pose,
    anchor_obs: &Vector2<f64>,
    rho: f64,
    observed_px: &Vector2<f64>,
) -> Option<Vector2<f64>> {
    let (xw, _) = anchored_point(anchor, anchor_obs, rho);
    let xt = target.inverse_transform_point(&xw);
    camera.project(&xt).ok().map(|px| px - observed_px)
}

pub fn reprojection(
    camera: &PinholeCamera,
    anchor: &Pose,
    target: &Pose,
    anchor_obs: &Vector2<f64>,
    rho: f64,
    observed_px: &Vector2<f64>,
) -> Option<Reprojection> {
    let (xw, local) = anchored_point(anchor, anchor_obs, rho);
    let xt = target.inverse_transform_point(&xw);
    let residual = camera.project(&xt).ok()? - observed_px;
    let jp = camera.project_jacobian(&xt);
    let rt_t = target.rotation_matrix().transpose();
    let ra = anchor.rotation_matrix();
    let j_w = jp * rt_t;

    let mut d_target = Matrix2x6::zeros();
    d_target.fixed_view_mut::<2, 3>(0, 0).copy_from(&-j_w);
    d_target.fixed_view_mut::<2, 3>(0, 3).copy_from(&(jp * skew(&xt)));

    let mut d_anchor = Matrix2x6::zeros();
    d_anchor.fixed_view_mut::<2, 3>(0, 0).copy_from(&j_w);
    d_anchor.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-j_w * ra * skew(&local)));

    let d_inverse_depth = -j_w * ra * local / rho;
    Some(Reprojection { residual, d_anchor, d_target, d_inverse_depth })
}

/// Maps a Jacobian with respect to a camera pose onto the body pose when
/// `camera = body ∘ extrinsic`.
pub fn camera_to_body_jacobian(d_cam: &Matrix2x6, body: &Pose, extrinsic: &Pose) -> Matrix2x6 {
    let dp = d_cam.fixed_view::<2, 3>(0, 0).into_owned();
    let dth = d_cam.fixed_view::<2, 3>(0, 3).into_owned();
    let mut out = Matrix2x6::zeros();
    out.fixed_view_mut::<2, 3>(0, 0).copy_from(&dp);
    let rbc_t = extrinsic.rotation_matrix().transpose();
    let d_theta: Matrix2x3<f64> = dp * (-body.rotation_matrix() * skew(&extrinsic.position)) + dth * rbc_t;
    out.fixed_view_mut::<2, 3>(0, 3).copy_from(&d_theta);
    out
}

/// Huber cost of a residual with squared norm `sq`.
pub fn huber_cost(sq: f64, delta: f64) -> f64 {
    let e = sq.sqrt();
    if e <= delta {
        sq
    } else {
        2.0 * delta * e - delta * delta
    }
}

/// IRLS weight matching [`huber_cost`].
pub fn huber_weight(sq: f64, delta: f64) -> f64 {
    let e = sq.sqrt();
    if e <= delta {
        1.0
    } else {
        delta / e
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RotationFactor {
    pub residual: Vector3<f64>,
    pub d_i: Matrix3<f64>,
    pub d_j: Matrix3<f64>,
    pub d_bg: Matrix3<f64>,
}

/// Rotation block of the IMU residual between two body rotations with a
/// candidate gyro bias.
pub fn body_rotation_factor(
    pre: &Preintegration,
    q_bi: &UnitQuaternion<f64>,
    q_bj: &UnitQuaternion<f64>,
    gyro_bias: &Vector3<f64>,
) -> RotationFactor {
    let phi = pre.d_theta_d_bg() * (gyro_bias - pre.linearization_bias.gyro_bias);
    let gamma_c = pre.gamma * quat_from_rotvec(&phi);
    let err = q_bi.inverse() * q_bj * gamma_c.inverse();
    let r_gc = gamma_c.to_rotation_matrix().into_inner();
    let left = quat_left_block(&err);
    RotationFactor {
        residual: 2.0 * err.imag(),
        d_i: -quat_right_block(&err),
        d_j: left * r_gc,
        d_bg: -left * r_gc * right_jacobian(&phi) * pre.d_theta_d_bg(),
    }
}

/// [`body_rotation_factor`] evaluated on camera rotations, Jacobians with
/// respect to right perturbations of the camera rotations.
pub fn camera_rotation_factor(
    pre: &Preintegration,
    q_ci: &UnitQuaternion<f64>,
    q_cj: &UnitQuaternion<f64>,
    gyro_bias: &Vector3<f64>,
    extrinsic: &Pose,
) -> RotationFactor {
    let q_cb = extrinsic.rotation.inverse();
    let mut f = body_rotation_factor(pre, &(q_ci * q_cb), &(q_cj * q_cb), gyro_bias);
    let rbc = extrinsic.rotation_matrix();
    f.d_i *= rbc;
    f.d_j *= rbc;
    f
}
