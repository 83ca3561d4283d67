//! Bundle adjustment over camera poses, inverse depths and the gyroscope
//! bias, with gyro rotation factors between consecutive keyframes.
//!
//! Gauge: the first camera pose is held fixed and the scale is fixed by
//! keeping the distance of the farthest camera from the origin constant.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};

use super::config::InitConfig;
use super::factors::{
    camera_rotation_factor, huber_cost, huber_weight, reprojection, reprojection_residual, Matrix2x6,
};
use super::lm::{minimize, LeastSquaresProblem, LmReport, NormalEquations};
use super::pnp::INVALID_RESIDUAL_PX;
use super::types::{InitError, SfmEstimate};
use crate::geom::{quat_from_rotvec, PinholeCamera, Pose};
use crate::imu::Preintegration;
use crate::matching::FeatureTrack;

#[derive(Debug, Clone, Copy)]
pub(crate) struct BaObservation {
    pub landmark: usize,
    pub frame: usize,
    pub pixel: Vector2<f64>,
}

/// Non-anchor inlier observations of every landmark.
pub(crate) fn collect_observations(estimate: &SfmEstimate, tracks: &[FeatureTrack]) -> Vec<BaObservation> {
    let mut out = Vec::new();
    for (l, (lm, &ti)) in estimate.landmarks.iter().zip(&estimate.landmark_tracks).enumerate() {
        for (oi, o) in tracks[ti].observations.iter().enumerate() {
            if o.frame != lm.anchor_frame && estimate.inlier_mask[ti][oi] {
                out.push(BaObservation { landmark: l, frame: o.frame, pixel: o.pixel });
            }
        }
    }
    out
}

pub(crate) fn sphere_basis(p: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let n = p.normalize();
    let helper = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let u = n.cross(&helper).normalize();
    (u, n.cross(&u))
}

#[derive(Debug, Clone, PartialEq)]
struct State {
    poses: Vec<Pose>,
    rho: Vec<f64>,
    gyro_bias: Vector3<f64>,
}

struct VgBa<'a> {
    camera: &'a PinholeCamera,
    extrinsic: &'a Pose,
    estimate: &'a SfmEstimate,
    observations: Vec<BaObservation>,
    preintegrations: &'a [Preintegration],
    use_gyro: bool,
    scale_frame: usize,
    offsets: Vec<Option<usize>>,
    bias_offset: usize,
    n_dense: usize,
    sigma: f64,
    delta: f64,
}

impl VgBa<'_> {
    fn pose_block(&self, state: &State, frame: usize, j: &Matrix2x6) -> Option<(usize, DMatrix<f64>)> {
        let off = self.offsets[frame]?;
        if frame == self.scale_frame {
            let (u, v) = sphere_basis(&state.poses[frame].position);
            let jp = j.fixed_view::<2, 3>(0, 0);
            let mut m = DMatrix::zeros(j.nrows(), 5);
            m.view_mut((0, 0), (2, 1)).copy_from(&(jp * u));
            m.view_mut((0, 1), (2, 1)).copy_from(&(jp * v));
            m.view_mut((0, 2), (2, 3)).copy_from(&j.fixed_view::<2, 3>(0, 3));
            Some((off, m))
        } else {
            Some((off, DMatrix::from_column_slice(2, 6, j.as_slice())))
        }
    }

    fn rotation_block(&self, frame: usize, j: &Matrix3<f64>) -> Option<(usize, DMatrix<f64>)> {
        let off = self.offsets[frame]?;
        let (width, col) = if frame == self.scale_frame { (5, 2) } else { (6, 3) };
        let mut m = DMatrix::zeros(3, width);
        m.view_mut((0, col), (3, 3)).copy_from(j);
        Some((off, m))
    }

    fn gyro_terms(&self, state: &State) -> Vec<(usize, Vector3<f64>, Matrix3<f64>, Matrix3<f64>, Matrix3<f64>)> {
        if !self.use_gyro {
            return Vec::new();
        }
        self.preintegrations
            .iter()
            .enumerate()
            .map(|(k, pre)| {
                let f = camera_rotation_factor(
                    pre,
                    &state.poses[k].rotation,
                    &state.poses[k + 1].rotation,
                    &state.gyro_bias,
                    self.extrinsic,
                );
                let s = pre.sqrt_information_rotation();
                (k, s * f.residual, s * f.d_i, s * f.d_j, s * f.d_bg)
            })
            .collect()
    }
}

impl LeastSquaresProblem for VgBa<'_> {
    type State = State;

    fn cost(&self, state: &State) -> f64 {
        let invalid = huber_cost((INVALID_RESIDUAL_PX / self.sigma).powi(2), self.delta);
        let mut c = 0.0;
        for o in &self.observations {
            let lm = &self.estimate.landmarks[o.landmark];
            let rho = state.rho[o.landmark];
            let r = (rho > 0.0)
                .then(|| {
                    reprojection_residual(
                        self.camera,
                        &state.poses[lm.anchor_frame],
                        &state.poses[o.frame],
                        &lm.anchor_observation,
                        rho,
                        &o.pixel,
                    )
                })
                .flatten();
            c += r.map_or(invalid, |r| huber_cost((r / self.sigma).norm_squared(), self.delta));
        }
        for (_, r, _, _, _) in self.gyro_terms(state) {
            c += r.norm_squared();
        }
        c
    }

    fn linearize(&self, state: &State) -> NormalEquations {
        let mut ne = NormalEquations::new(self.n_dense, state.rho.len());
        for o in &self.observations {
            let lm = &self.estimate.landmarks[o.landmark];
            let rho = state.rho[o.landmark];
            if rho <= 0.0 {
                continue;
            }
            let Some(rp) = reprojection(
                self.camera,
                &state.poses[lm.anchor_frame],
                &state.poses[o.frame],
                &lm.anchor_observation,
                rho,
                &o.pixel,
            ) else {
                continue;
            };
            let r = rp.residual / self.sigma;
            let w = huber_weight(r.norm_squared(), self.delta);
            let mut dense = Vec::with_capacity(2);
            dense.extend(self.pose_block(state, lm.anchor_frame, &(rp.d_anchor / self.sigma)));
            dense.extend(self.pose_block(state, o.frame, &(rp.d_target / self.sigma)));
            let jp = DVector::from_column_slice((rp.d_inverse_depth / self.sigma).as_slice());
            ne.add(&DVector::from_column_slice(r.as_slice()), &dense, Some((o.landmark, &jp)), w);
        }
        for (k, r, di, dj, dbg) in self.gyro_terms(state) {
            let mut dense = Vec::with_capacity(3);
            dense.extend(self.rotation_block(k, &di));
            dense.extend(self.rotation_block(k + 1, &dj));
            dense.push((self.bias_offset, DMatrix::from_column_slice(3, 3, dbg.as_slice())));
            ne.add(&DVector::from_column_slice(r.as_slice()), &dense, None, 1.0);
        }
        ne
    }

    fn retract(&self, state: &State, d: &DVector<f64>, dp: &DVector<f64>) -> State {
        let mut next = state.clone();
        for (k, off) in self.offsets.iter().enumerate() {
            let Some(off) = *off else { continue };
            let pose = &mut next.poses[k];
            if k == self.scale_frame {
                let (u, v) = sphere_basis(&pose.position);
                let radius = pose.position.norm();
                pose.position = (pose.position + u * d[off] + v * d[off + 1]).normalize() * radius;
                pose.rotation = pose.rotation * quat_from_rotvec(&Vector3::new(d[off + 2], d[off + 3], d[off + 4]));
            } else {
                pose.position += Vector3::new(d[off], d[off + 1], d[off + 2]);
                pose.rotation = pose.rotation * quat_from_rotvec(&Vector3::new(d[off + 3], d[off + 4], d[off + 5]));
            }
        }
        if self.use_gyro {
            next.gyro_bias += Vector3::new(d[self.bias_offset], d[self.bias_offset + 1], d[self.bias_offset + 2]);
        }
        for (r, delta) in next.rho.iter_mut().zip(dp.iter()) {
            *r += delta;
        }
        next
    }
}

/// Refines an up-to-scale reconstruction. `preintegrations[k]` spans
/// keyframes `k` and `k + 1`; with `use_gyro` off the problem is purely
/// visual and the gyro bias is left unchanged.
pub fn vg_ba(
    estimate: &SfmEstimate,
    tracks: &[FeatureTrack],
    preintegrations: &[Preintegration],
    camera: &PinholeCamera,
    extrinsic: &Pose,
    use_gyro: bool,
    cfg: &InitConfig,
) -> Result<(SfmEstimate, LmReport), InitError> {
    let n = estimate.camera_poses.len();
    if use_gyro && preintegrations.len() + 1 != n {
        return Err(InitError::RankDeficient);
    }
    let (scale_frame, radius) = estimate
        .camera_poses
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, p)| (k, p.position.norm()))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or(InitError::RankDeficient)?;
    if !(radius > 1e-9) {
        return Err(InitError::RankDeficient);
    }
    let mut offsets = vec![None; n];
    let mut next = 0;
    for (k, off) in offsets.iter_mut().enumerate().skip(1) {
        *off = Some(next);
        next += if k == scale_frame { 5 } else { 6 };
    }
    let bias_offset = next;
    let n_dense = if use_gyro { next + 3 } else { next };

    let problem = VgBa {
        camera,
        extrinsic,
        estimate,
        observations: collect_observations(estimate, tracks),
        preintegrations,
        use_gyro,
        scale_frame,
        offsets,
        bias_offset,
        n_dense,
        sigma: cfg.pixel_sigma,
        delta: cfg.huber_delta_px / cfg.pixel_sigma,
    };
    let initial = State {
        poses: estimate.camera_poses.clone(),
        rho: estimate.landmarks.iter().map(|l| l.inverse_depth).collect(),
        gyro_bias: estimate.gyro_bias,
    };
    let (state, report) = minimize(&problem, initial, &cfg.lm)?;
    if !state.poses.iter().all(Pose::is_finite) || !state.gyro_bias.iter().all(|v| v.is_finite()) {
        return Err(InitError::Diverged);
    }
    let mut out = estimate.clone();
    out.camera_poses = state.poses;
    out.gyro_bias = state.gyro_bias;
    for (l, rho) in out.landmarks.iter_mut().zip(state.rho) {
        l.inverse_depth = rho;
    }
    Ok((out, report))
}
