//! Visual-inertial bundle adjustment in a gravity-aligned world, seeded
//! from the linear alignment.
//!
//! Gauge: the first body position is fixed and its rotation may only tilt
//! about the world x and y axes, so yaw stays fixed.

use nalgebra::{DMatrix, DVector, Matrix3x2, SMatrix, Vector3};

use super::config::InitConfig;
use super::factors::{camera_to_body_jacobian, huber_cost, huber_weight, reprojection, reprojection_residual};
use super::lm::{minimize, LeastSquaresProblem, LmReport, NormalEquations};
use super::pnp::INVALID_RESIDUAL_PX;
use super::types::{InitError, InitState, SfmEstimate};
use super::vg_ba::{collect_observations, BaObservation};
use super::weight::parallax_weight;
use crate::geom::{quat_from_rotvec, rotation_between, yaw_of, PinholeCamera, Pose};
use crate::imu::{imu_residual_jacobians, BiasState, GravityVector, NavState, Preintegration, GRAVITY_MAGNITUDE};
use crate::matching::FeatureTrack;

/// Metric body trajectory in a world frame with z along gravity, body 0 at
/// the origin with zero yaw.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSolution {
    /// Body-to-world poses.
    pub body_poses: Vec<Pose>,
    pub world_velocities: Vec<Vector3<f64>>,
    /// Metric inverse depths, one per SfM landmark.
    pub inverse_depths: Vec<f64>,
    pub state: InitState,
}

/// Applies an alignment result to the up-to-scale reconstruction.
pub fn metric_from_alignment(sfm: &SfmEstimate, init: &InitState, extrinsic: &Pose) -> MetricSolution {
    let q_cb = extrinsic.rotation.inverse();
    let p_bc = extrinsic.position;
    // body poses in c0, metric
    let bodies: Vec<Pose> = sfm
        .camera_poses
        .iter()
        .map(|c| {
            let r = c.rotation * q_cb;
            Pose::new(r, init.scale * c.position - r * p_bc)
        })
        .collect();
    let tilt = rotation_between(&init.gravity_c0, &Vector3::z());
    let yaw = yaw_of(&(tilt * bodies[0].rotation));
    let r_wc0 = quat_from_rotvec(&Vector3::new(0.0, 0.0, -yaw)) * tilt;
    let origin = bodies[0].position;
    let body_poses: Vec<Pose> =
        bodies.iter().map(|b| Pose::new(r_wc0 * b.rotation, r_wc0 * (b.position - origin))).collect();
    let world_velocities = body_poses.iter().zip(&init.velocities).map(|(b, v)| b.rotation * v).collect();
    MetricSolution {
        body_poses,
        world_velocities,
        inverse_depths: sfm.landmarks.iter().map(|l| l.inverse_depth / init.scale).collect(),
        state: init.clone(),
    }
}

#[derive(Debug, Clone, PartialEq)]
struct State {
    poses: Vec<Pose>,
    velocities: Vec<Vector3<f64>>,
    rho: Vec<f64>,
    gyro_bias: Vector3<f64>,
    accel_bias: Vector3<f64>,
}

impl State {
    fn nav(&self, k: usize) -> NavState {
        NavState::new(self.poses[k], self.velocities[k], BiasState::new(self.gyro_bias, self.accel_bias))
    }
}

struct ViBa<'a> {
    camera: &'a PinholeCamera,
    extrinsic: &'a Pose,
    estimate: &'a SfmEstimate,
    observations: Vec<BaObservation>,
    preintegrations: &'a [Preintegration],
    whitening: Vec<SMatrix<f64, 9, 9>>,
    gravity: GravityVector,
    visual_weight: f64,
    sigma: f64,
    delta: f64,
    /// Start column of each frame block: frame 0 is (tilt 2, v 3), the
    /// rest (p 3, θ 3, v 3).
    offsets: Vec<usize>,
    bg_offset: usize,
    ba_offset: Option<usize>,
    accel_prior_std: f64,
    n_dense: usize,
}

/// Left-perturbation tilt axes of body 0 expressed as right perturbations.
fn tilt_map(pose0: &Pose) -> Matrix3x2<f64> {
    let rt = pose0.rotation_matrix().transpose();
    Matrix3x2::from_columns(&[rt.column(0).into_owned(), rt.column(1).into_owned()])
}

impl ViBa<'_> {
    fn width(k: usize) -> usize {
        if k == 0 {
            5
        } else {
            9
        }
    }

    /// Dense block for frame `k` from Jacobians with respect to its
    /// position, rotation (right) and velocity.
    fn frame_block(
        &self,
        state: &State,
        k: usize,
        jp: Option<DMatrix<f64>>,
        jt: Option<DMatrix<f64>>,
        jv: Option<DMatrix<f64>>,
    ) -> (usize, DMatrix<f64>) {
        let rows = jp.as_ref().or(jt.as_ref()).or(jv.as_ref()).map_or(0, |m| m.nrows());
        let mut m = DMatrix::zeros(rows, Self::width(k));
        if k == 0 {
            if let Some(jt) = jt {
                let t = tilt_map(&state.poses[0]);
                let t = DMatrix::from_column_slice(3, 2, t.as_slice());
                m.view_mut((0, 0), (rows, 2)).copy_from(&(jt * t));
            }
            if let Some(jv) = jv {
                m.view_mut((0, 2), (rows, 3)).copy_from(&jv);
            }
        } else {
            for (col, j) in [(0, jp), (3, jt), (6, jv)] {
                if let Some(j) = j {
                    m.view_mut((0, col), (rows, 3)).copy_from(&j);
                }
            }
        }
        (self.offsets[k], m)
    }

    fn camera_pose(&self, state: &State, k: usize) -> Pose {
        state.poses[k].compose(self.extrinsic)
    }

    fn imu_cost(&self, state: &State) -> f64 {
        let mut c = 0.0;
        for (k, pre) in self.preintegrations.iter().enumerate() {
            let r = crate::imu::imu_residual(pre, &state.nav(k), &state.nav(k + 1), &self.gravity);
            c += (self.whitening[k] * r.fixed_rows::<9>(0)).norm_squared();
        }
        if self.ba_offset.is_some() {
            c += (state.accel_bias / self.accel_prior_std).norm_squared();
        }
        c
    }
}

impl LeastSquaresProblem for ViBa<'_> {
    type State = State;

    fn cost(&self, state: &State) -> f64 {
        let invalid = huber_cost((INVALID_RESIDUAL_PX / self.sigma).powi(2), self.delta);
        let mut cv = 0.0;
        for o in &self.observations {
            let lm = &self.estimate.landmarks[o.landmark];
            let rho = state.rho[o.landmark];
            let r = (rho > 0.0)
                .then(|| {
                    reprojection_residual(
                        self.camera,
                        &self.camera_pose(state, lm.anchor_frame),
                        &self.camera_pose(state, o.frame),
                        &lm.anchor_observation,
                        rho,
                        &o.pixel,
                    )
                })
                .flatten();
            cv += r.map_or(invalid, |r| huber_cost((r / self.sigma).norm_squared(), self.delta));
        }
        self.visual_weight * cv + self.imu_cost(state)
    }

    fn linearize(&self, state: &State) -> NormalEquations {
        let mut ne = NormalEquations::new(self.n_dense, state.rho.len());
        let to_dm = |m: &nalgebra::Matrix2x3<f64>| DMatrix::from_column_slice(2, 3, m.as_slice());
        for o in &self.observations {
            let lm = &self.estimate.landmarks[o.landmark];
            let rho = state.rho[o.landmark];
            if rho <= 0.0 {
                continue;
            }
            let Some(rp) = reprojection(
                self.camera,
                &self.camera_pose(state, lm.anchor_frame),
                &self.camera_pose(state, o.frame),
                &lm.anchor_observation,
                rho,
                &o.pixel,
            ) else {
                continue;
            };
            let r = rp.residual / self.sigma;
            let w = self.visual_weight * huber_weight(r.norm_squared(), self.delta);
            let mut dense = Vec::with_capacity(2);
            for (frame, d_cam) in [(lm.anchor_frame, rp.d_anchor), (o.frame, rp.d_target)] {
                let jb = camera_to_body_jacobian(&d_cam, &state.poses[frame], self.extrinsic) / self.sigma;
                let jp = to_dm(&jb.fixed_view::<2, 3>(0, 0).into_owned());
                let jt = to_dm(&jb.fixed_view::<2, 3>(0, 3).into_owned());
                dense.push(self.frame_block(state, frame, Some(jp), Some(jt), None));
            }
            let jr = DVector::from_column_slice((rp.d_inverse_depth / self.sigma).as_slice());
            ne.add(&DVector::from_column_slice(r.as_slice()), &dense, Some((o.landmark, &jr)), w);
        }

        for (k, pre) in self.preintegrations.iter().enumerate() {
            let j = imu_residual_jacobians(pre, &state.nav(k), &state.nav(k + 1), &self.gravity);
            let s = &self.whitening[k];
            let r9 = s * j.residual.fixed_rows::<9>(0);
            let di = s * j.d_state_k.fixed_view::<9, 15>(0, 0);
            let dj = s * j.d_state_k1.fixed_view::<9, 15>(0, 0);
            let col = |m: &SMatrix<f64, 9, 15>, c: usize| {
                DMatrix::from_column_slice(9, 3, m.fixed_view::<9, 3>(0, c).as_slice())
            };
            let mut dense = vec![
                self.frame_block(state, k, Some(col(&di, 0)), Some(col(&di, 3)), Some(col(&di, 6))),
                self.frame_block(state, k + 1, Some(col(&dj, 0)), Some(col(&dj, 3)), Some(col(&dj, 6))),
                (self.bg_offset, col(&di, 12) + col(&dj, 12)),
            ];
            if let Some(off) = self.ba_offset {
                dense.push((off, col(&di, 9) + col(&dj, 9)));
            }
            ne.add(&DVector::from_column_slice(r9.as_slice()), &dense, None, 1.0);
        }

        if let Some(off) = self.ba_offset {
            let inv = 1.0 / self.accel_prior_std;
            let r = DVector::from_column_slice((state.accel_bias * inv).as_slice());
            ne.add(&r, &[(off, DMatrix::identity(3, 3) * inv)], None, 1.0);
        }
        ne
    }

    fn retract(&self, state: &State, d: &DVector<f64>, dp: &DVector<f64>) -> State {
        let mut next = state.clone();
        for k in 0..next.poses.len() {
            let off = self.offsets[k];
            let v3 = |i: usize| Vector3::new(d[i], d[i + 1], d[i + 2]);
            if k == 0 {
                let tilt = quat_from_rotvec(&Vector3::new(d[off], d[off + 1], 0.0));
                next.poses[0].rotation = tilt * next.poses[0].rotation;
                next.velocities[0] += v3(off + 2);
            } else {
                next.poses[k].position += v3(off);
                next.poses[k].rotation = next.poses[k].rotation * quat_from_rotvec(&v3(off + 3));
                next.velocities[k] += v3(off + 6);
            }
        }
        next.gyro_bias += Vector3::new(d[self.bg_offset], d[self.bg_offset + 1], d[self.bg_offset + 2]);
        if let Some(off) = self.ba_offset {
            next.accel_bias += Vector3::new(d[off], d[off + 1], d[off + 2]);
        }
        for (r, delta) in next.rho.iter_mut().zip(dp.iter()) {
            *r += delta;
        }
        next
    }
}

/// Least-squares scale mapping SfM camera positions onto metric ones, both
/// relative to the first camera and expressed in its frame.
fn recovered_scale(sfm: &SfmEstimate, body_poses: &[Pose], extrinsic: &Pose) -> f64 {
    let cams: Vec<Pose> = body_poses.iter().map(|b| b.compose(extrinsic)).collect();
    let c0 = cams[0].inverse();
    let (mut num, mut den) = (0.0, 0.0);
    for (c, s) in cams.iter().zip(&sfm.camera_poses) {
        let m = c0.transform_point(&c.position);
        num += m.dot(&s.position);
        den += s.position.norm_squared();
    }
    num / den
}

fn build<'a>(
    sfm: &'a SfmEstimate,
    tracks: &[FeatureTrack],
    preintegrations: &'a [Preintegration],
    camera: &'a PinholeCamera,
    extrinsic: &'a Pose,
    parallax_px: f64,
    cfg: &InitConfig,
) -> ViBa<'a> {
    let n = sfm.camera_poses.len();
    let offsets: Vec<usize> = (0..n)
        .scan(0, |acc, k| {
            let o = *acc;
            *acc += ViBa::width(k);
            Some(o)
        })
        .collect();
    let bg_offset = offsets[n - 1] + ViBa::width(n - 1);
    let ba_offset = cfg.estimate_accel_bias.then_some(bg_offset + 3);
    let n_dense = bg_offset + if cfg.estimate_accel_bias { 6 } else { 3 };
    ViBa {
        camera,
        extrinsic,
        estimate: sfm,
        observations: collect_observations(sfm, tracks),
        preintegrations,
        whitening: preintegrations.iter().map(|p| p.sqrt_information_nav()).collect(),
        gravity: GravityVector::nominal(),
        visual_weight: if cfg.ablation.parallax_weight { parallax_weight(parallax_px, &cfg.weight) } else { 1.0 },
        sigma: cfg.pixel_sigma,
        delta: cfg.huber_delta_px / cfg.pixel_sigma,
        offsets,
        bg_offset,
        ba_offset,
        accel_prior_std: cfg.accel_bias_prior_std,
        n_dense,
    }
}

fn initial_state(seed: &MetricSolution) -> State {
    State {
        poses: seed.body_poses.clone(),
        velocities: seed.world_velocities.clone(),
        rho: seed.inverse_depths.clone(),
        gyro_bias: seed.state.gyro_bias,
        accel_bias: seed.state.accel_bias,
    }
}

/// Jointly refines metric body poses, velocities, inverse depths and both
/// biases, with visual terms scaled by the parallax weight.
#[allow(clippy::too_many_arguments)]
pub fn vi_ba(
    sfm: &SfmEstimate,
    tracks: &[FeatureTrack],
    init: &InitState,
    preintegrations: &[Preintegration],
    camera: &PinholeCamera,
    extrinsic: &Pose,
    parallax_px: f64,
    cfg: &InitConfig,
) -> Result<(MetricSolution, LmReport), InitError> {
    let n = sfm.camera_poses.len();
    if n < 2 || preintegrations.len() + 1 != n || init.velocities.len() != n {
        return Err(InitError::RankDeficient);
    }
    let seed = metric_from_alignment(sfm, init, extrinsic);
    let problem = build(sfm, tracks, preintegrations, camera, extrinsic, parallax_px, cfg);
    let (s, report) = minimize(&problem, initial_state(&seed), &cfg.lm)?;
    let finite = s.poses.iter().all(Pose::is_finite)
        && s.velocities.iter().chain([&s.gyro_bias, &s.accel_bias]).all(|v| v.iter().all(|x| x.is_finite()));
    if !finite {
        return Err(InitError::Diverged);
    }

    let scale = recovered_scale(sfm, &s.poses, extrinsic);
    if !(scale > 0.0) {
        return Err(InitError::NonPositiveScale(scale));
    }
    let c0 = s.poses[0].compose(extrinsic);
    let state = InitState {
        velocities: s.poses.iter().zip(&s.velocities).map(|(p, v)| p.rotation.inverse() * v).collect(),
        scale,
        gravity_c0: c0.rotation.inverse() * Vector3::new(0.0, 0.0, GRAVITY_MAGNITUDE),
        gyro_bias: s.gyro_bias,
        accel_bias: s.accel_bias,
    };
    Ok((MetricSolution { body_poses: s.poses, world_velocities: s.velocities, inverse_depths: s.rho, state }, report))
}
