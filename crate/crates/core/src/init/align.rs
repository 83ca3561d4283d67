//! Linear recovery of velocities, scale and gravity from up-to-scale camera
//! poses and pre-integrated IMU terms.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use super::config::InitConfig;
use super::types::{InitError, InitState, SfmEstimate};
use crate::geom::Pose;
use crate::imu::{BiasState, Preintegration, GRAVITY_MAGNITUDE};

/// Unknown layout: v_0 .. v_{n-1} (body frame), then gravity (3 free or 2
/// tangent), then scale.
struct Layout {
    n: usize,
    gravity_dims: usize,
}

impl Layout {
    fn scale(&self) -> usize {
        3 * self.n + self.gravity_dims
    }
    fn cols(&self) -> usize {
        self.scale() + 1
    }
}

/// Per-interval data shared by the free and tangent solves.
struct Interval {
    dt: f64,
    /// Start body rotation in c0 as a matrix, and its relative rotation to
    /// the next body.
    r_k: Matrix3<f64>,
    r_rel: Matrix3<f64>,
    /// Up-to-scale camera displacement rotated into body k.
    dp: Vector3<f64>,
    alpha_rhs: Vector3<f64>,
    beta_rhs: Vector3<f64>,
}

fn intervals(sfm: &SfmEstimate, pre: &[Preintegration], extrinsic: &Pose) -> Vec<Interval> {
    let r_bc = extrinsic.rotation_matrix();
    let p_bc = extrinsic.position;
    let bias = BiasState::new(sfm.gyro_bias, Vector3::zeros());
    let rot = |k: usize| sfm.camera_poses[k].rotation_matrix() * r_bc.transpose();
    pre.iter()
        .enumerate()
        .map(|(k, p)| {
            let (alpha, beta, _) = p.corrected(&bias);
            let (r_k, r_k1) = (rot(k), rot(k + 1));
            let r_rel = r_k.transpose() * r_k1;
            let dp = r_k.transpose() * (sfm.camera_poses[k + 1].position - sfm.camera_poses[k].position);
            Interval { dt: p.dt_total, r_k, r_rel, dp, alpha_rhs: alpha + r_rel * p_bc - p_bc, beta_rhs: beta }
        })
        .collect()
}

/// Stacks the α and β rows. `gravity` maps the gravity unknowns to c0
/// (identity for the free solve, tangent basis otherwise); `g_fixed` is the
/// constant part moved to the right-hand side.
fn build(
    iv: &[Interval],
    layout: &Layout,
    gravity: &DMatrix<f64>,
    g_fixed: &Vector3<f64>,
) -> (DMatrix<f64>, DVector<f64>) {
    let rows = 6 * iv.len();
    let mut a = DMatrix::zeros(rows, layout.cols());
    let mut b = DVector::zeros(rows);
    let g0 = 3 * layout.n;
    for (k, it) in iv.iter().enumerate() {
        let (ra, rb) = (6 * k, 6 * k + 3);
        let rkt = it.r_k.transpose();
        let ga = 0.5 * it.dt * it.dt * rkt;
        let gb = it.dt * rkt;

        a.view_mut((ra, 3 * k), (3, 3)).copy_from(&(-it.dt * Matrix3::identity()));
        a.view_mut((ra, g0), (3, layout.gravity_dims))
            .copy_from(&(DMatrix::from_iterator(3, 3, ga.iter().cloned()) * gravity));
        a.view_mut((ra, layout.scale()), (3, 1)).copy_from(&it.dp);
        b.rows_mut(ra, 3).copy_from(&(it.alpha_rhs - ga * g_fixed));

        a.view_mut((rb, 3 * k), (3, 3)).copy_from(&(-Matrix3::identity()));
        a.view_mut((rb, 3 * (k + 1)), (3, 3)).copy_from(&it.r_rel);
        a.view_mut((rb, g0), (3, layout.gravity_dims))
            .copy_from(&(DMatrix::from_iterator(3, 3, gb.iter().cloned()) * gravity));
        b.rows_mut(rb, 3).copy_from(&(it.beta_rhs - gb * g_fixed));
    }
    (a, b)
}

/// Least squares with unit-norm column scaling; fails when the scaled
/// matrix's condition number exceeds `max_cond`.
fn solve(a: &DMatrix<f64>, b: &DVector<f64>, max_cond: f64) -> Result<DVector<f64>, InitError> {
    let norms: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if norms.iter().any(|&n| n <= f64::EPSILON * 1e3 * norms.iter().cloned().fold(0.0, f64::max)) {
        return Err(InitError::IllConditioned(f64::INFINITY));
    }
    let mut scaled = a.clone();
    for (j, mut c) in scaled.column_iter_mut().enumerate() {
        c /= norms[j];
    }
    let svd = scaled.svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > max_cond {
        return Err(InitError::IllConditioned(cond));
    }
    let y = svd.solve(b, 0.0).map_err(|_| InitError::IllConditioned(cond))?;
    Ok(DVector::from_iterator(y.len(), y.iter().zip(&norms).map(|(v, n)| v / n)))
}

/// Orthonormal pair spanning the plane perpendicular to `g`.
fn tangent_basis(g: &Vector3<f64>) -> DMatrix<f64> {
    let d = g.normalize();
    let helper = if d.x.abs() < 0.9 { Vector3::x() } else { Vector3::z() };
    let u = (helper - d * d.dot(&helper)).normalize();
    let v = d.cross(&u);
    DMatrix::from_columns(&[DVector::from_column_slice(u.as_slice()), DVector::from_column_slice(v.as_slice())])
}

/// Solves for body velocities, metric scale and gravity in the first
/// camera frame. `preintegrations[k]` spans keyframes k → k+1 and is
/// corrected to the SfM gyro bias.
pub fn va_align(
    sfm: &SfmEstimate,
    preintegrations: &[Preintegration],
    extrinsic: &Pose,
    cfg: &InitConfig,
) -> Result<InitState, InitError> {
    let n = sfm.camera_poses.len();
    if n < 2 || preintegrations.len() != n - 1 {
        return Err(InitError::RankDeficient);
    }
    let iv = intervals(sfm, preintegrations, extrinsic);

    let free = Layout { n, gravity_dims: 3 };
    let (a, b) = build(&iv, &free, &DMatrix::identity(3, 3), &Vector3::zeros());
    let x = solve(&a, &b, cfg.max_condition_number)?;
    let mut g = Vector3::new(x[3 * n], x[3 * n + 1], x[3 * n + 2]);
    if !(g.norm() > 0.0) {
        return Err(InitError::IllConditioned(f64::INFINITY));
    }
    g = g.normalize() * GRAVITY_MAGNITUDE;
    let mut sol = x;

    let tangent = Layout { n, gravity_dims: 2 };
    for _ in 0..cfg.gravity_refinement_passes {
        let basis = tangent_basis(&g);
        let (a, b) = build(&iv, &tangent, &basis, &g);
        let y = solve(&a, &b, cfg.max_condition_number)?;
        let dg = &basis * y.rows(3 * n, 2);
        g = (g + Vector3::new(dg[0], dg[1], dg[2])).normalize() * GRAVITY_MAGNITUDE;
        sol = y;
    }

    let scale = sol[sol.len() - 1];
    if !(scale > 0.0) {
        return Err(InitError::NonPositiveScale(scale));
    }
    Ok(InitState {
        velocities: (0..n).map(|k| Vector3::new(sol[3 * k], sol[3 * k + 1], sol[3 * k + 2])).collect(),
        scale,
        gravity_c0: g,
        gyro_bias: sfm.gyro_bias,
        accel_bias: Vector3::zeros(),
    })
}
