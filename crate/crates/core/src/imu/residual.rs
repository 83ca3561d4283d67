use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};

use super::{GravityVector, NavState, Preintegration};
use crate::geom::{quat_from_rotvec, quat_left_block, quat_right_block, right_jacobian, skew, Pose};

/// Residual and Jacobians with respect to each state's tangent
/// `(δp, δθ, δv, δb_a, δb_g)`; rotations are perturbed on the right.
#[derive(Debug, Clone)]
pub struct ImuJacobians {
    pub residual: SVector<f64, 15>,
    pub d_state_k: SMatrix<f64, 15, 15>,
    pub d_state_k1: SMatrix<f64, 15, 15>,
}

struct Parts {
    residual: SVector<f64, 15>,
    y_alpha: Vector3<f64>,
    y_beta: Vector3<f64>,
    err: UnitQuaternion<f64>,
    gamma_c: UnitQuaternion<f64>,
    phi: Vector3<f64>,
}

fn parts(pre: &Preintegration, k: &NavState, k1: &NavState, gravity: &GravityVector) -> Parts {
    let dt = pre.dt_total;
    let g = gravity.0;
    let ri_t = k.pose.rotation.inverse();
    let y_alpha = ri_t * (k1.pose.position - k.pose.position - k.velocity * dt + 0.5 * g * dt * dt);
    let y_beta = ri_t * (k1.velocity - k.velocity + g * dt);

    let dba = k.bias.accel_bias - pre.linearization_bias.accel_bias;
    let dbg = k.bias.gyro_bias - pre.linearization_bias.gyro_bias;
    let alpha_c = pre.alpha + pre.d_alpha_d_ba() * dba + pre.d_alpha_d_bg() * dbg;
    let beta_c = pre.beta + pre.d_beta_d_ba() * dba + pre.d_beta_d_bg() * dbg;
    let phi = pre.d_theta_d_bg() * dbg;
    let gamma_c = pre.gamma * quat_from_rotvec(&phi);
    let err = k.pose.rotation.inverse() * k1.pose.rotation * gamma_c.inverse();

    let mut r = SVector::<f64, 15>::zeros();
    r.fixed_rows_mut::<3>(0).copy_from(&(y_alpha - alpha_c));
    r.fixed_rows_mut::<3>(3).copy_from(&(y_beta - beta_c));
    r.fixed_rows_mut::<3>(6).copy_from(&(2.0 * err.imag()));
    r.fixed_rows_mut::<3>(9).copy_from(&(k1.bias.accel_bias - k.bias.accel_bias));
    r.fixed_rows_mut::<3>(12).copy_from(&(k1.bias.gyro_bias - k.bias.gyro_bias));
    Parts { residual: r, y_alpha, y_beta, err, gamma_c, phi }
}

/// Stacked (position, velocity, rotation, accel bias, gyro bias) residual
/// between two body states; gravity is the world-frame vector that the
/// accelerometer reads at rest.
pub fn imu_residual(pre: &Preintegration, k: &NavState, k1: &NavState, gravity: &GravityVector) -> SVector<f64, 15> {
    parts(pre, k, k1, gravity).residual
}

pub fn imu_residual_jacobians(
    pre: &Preintegration,
    k: &NavState,
    k1: &NavState,
    gravity: &GravityVector,
) -> ImuJacobians {
    let p = parts(pre, k, k1, gravity);
    let dt = pre.dt_total;
    let ri_t = k.pose.rotation_matrix().transpose();
    let i3 = Matrix3::identity();
    let r_gc = p.gamma_c.to_rotation_matrix().into_inner();
    let left_e = quat_left_block(&p.err);

    let mut di = SMatrix::<f64, 15, 15>::zeros();
    let mut dj = SMatrix::<f64, 15, 15>::zeros();
    let (rp, rv, rt, rba, rbg) = (0, 3, 6, 9, 12);
    let (sp, st, sv, sba, sbg) = (0, 3, 6, 9, 12);

    di.fixed_view_mut::<3, 3>(rp, sp).copy_from(&-ri_t);
    di.fixed_view_mut::<3, 3>(rp, st).copy_from(&skew(&p.y_alpha));
    di.fixed_view_mut::<3, 3>(rp, sv).copy_from(&(-ri_t * dt));
    di.fixed_view_mut::<3, 3>(rp, sba).copy_from(&-pre.d_alpha_d_ba());
    di.fixed_view_mut::<3, 3>(rp, sbg).copy_from(&-pre.d_alpha_d_bg());

    di.fixed_view_mut::<3, 3>(rv, st).copy_from(&skew(&p.y_beta));
    di.fixed_view_mut::<3, 3>(rv, sv).copy_from(&-ri_t);
    di.fixed_view_mut::<3, 3>(rv, sba).copy_from(&-pre.d_beta_d_ba());
    di.fixed_view_mut::<3, 3>(rv, sbg).copy_from(&-pre.d_beta_d_bg());

    di.fixed_view_mut::<3, 3>(rt, st).copy_from(&-quat_right_block(&p.err));
    di.fixed_view_mut::<3, 3>(rt, sbg).copy_from(&(-left_e * r_gc * right_jacobian(&p.phi) * pre.d_theta_d_bg()));

    di.fixed_view_mut::<3, 3>(rba, sba).copy_from(&-i3);
    di.fixed_view_mut::<3, 3>(rbg, sbg).copy_from(&-i3);

    dj.fixed_view_mut::<3, 3>(rp, sp).copy_from(&ri_t);
    dj.fixed_view_mut::<3, 3>(rv, sv).copy_from(&ri_t);
    dj.fixed_view_mut::<3, 3>(rt, st).copy_from(&(left_e * r_gc));
    dj.fixed_view_mut::<3, 3>(rba, sba).copy_from(&i3);
    dj.fixed_view_mut::<3, 3>(rbg, sbg).copy_from(&i3);

    ImuJacobians { residual: p.residual, d_state_k: di, d_state_k1: dj }
}

/// Relative camera rotation `R_ci_cj` implied by a body rotation term and
/// the camera-to-body extrinsic.
pub fn camera_rotation_prior(gamma: &UnitQuaternion<f64>, extrinsic: &Pose) -> UnitQuaternion<f64> {
    extrinsic.rotation.inverse() * gamma * extrinsic.rotation
}
