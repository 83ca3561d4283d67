//! Single-frame pose from known structure, with the rotation tied to a
//! neighboring frame through the gyroscope.

use nalgebra::{DMatrix, DVector, Matrix2x3, Vector2, Vector3};

use super::config::InitConfig;
use super::factors::{camera_rotation_factor, huber_cost, huber_weight};
use super::lm::{minimize, LeastSquaresProblem, LmReport, NormalEquations};
use super::types::InitError;
use crate::geom::{quat_from_rotvec, skew, PinholeCamera, Pose};
use crate::imu::{camera_rotation_prior, Preintegration};

/// Residual charged to an observation that cannot be projected, pixels.
pub(crate) const INVALID_RESIDUAL_PX: f64 = 1e3;

#[derive(Debug, Clone, Copy)]
pub struct PnpObservation {
    /// Landmark position in the reconstruction frame.
    pub point: Vector3<f64>,
    pub pixel: Vector2<f64>,
}

/// Gyroscope link between the frame being solved and an already posed
/// neighbor.
#[derive(Debug, Clone, Copy)]
pub struct GyroLink<'a> {
    /// Pre-integration over the interval between the two frames.
    pub preintegration: &'a Preintegration,
    /// Camera pose of the neighbor.
    pub neighbor: Pose,
    /// True when the neighbor precedes the frame being solved.
    pub neighbor_first: bool,
    pub gyro_bias: Vector3<f64>,
    /// Camera-to-body transform.
    pub extrinsic: Pose,
}

impl GyroLink<'_> {
    /// Neighbor position with the neighbor rotation advanced by the
    /// pre-integrated rotation.
    pub fn predicted_pose(&self) -> Pose {
        let (_, _, gamma) = self
            .preintegration
            .corrected(&crate::imu::BiasState::new(self.gyro_bias, self.preintegration.linearization_bias.accel_bias));
        let r = camera_rotation_prior(&gamma, &self.extrinsic);
        let rotation =
            if self.neighbor_first { self.neighbor.rotation * r } else { self.neighbor.rotation * r.inverse() };
        Pose::new(rotation, self.neighbor.position)
    }
}

#[derive(Debug, Clone)]
pub struct PnpResult {
    pub pose: Pose,
    pub report: LmReport,
}

struct VgPnp<'a> {
    camera: &'a PinholeCamera,
    observations: &'a [PnpObservation],
    link: &'a GyroLink<'a>,
    sigma: f64,
    delta: f64,
}

impl VgPnp<'_> {
    fn rotation_residual(&self, pose: &Pose) -> (Vector3<f64>, nalgebra::Matrix3<f64>) {
        let l = self.link;
        let s = l.preintegration.sqrt_information_rotation();
        if l.neighbor_first {
            let f = camera_rotation_factor(
                l.preintegration,
                &l.neighbor.rotation,
                &pose.rotation,
                &l.gyro_bias,
                &l.extrinsic,
            );
            (s * f.residual, s * f.d_j)
        } else {
            let f = camera_rotation_factor(
                l.preintegration,
                &pose.rotation,
                &l.neighbor.rotation,
                &l.gyro_bias,
                &l.extrinsic,
            );
            (s * f.residual, s * f.d_i)
        }
    }

    fn visual(&self, pose: &Pose, o: &PnpObservation) -> Option<(Vector2<f64>, Matrix2x3<f64>, Vector3<f64>)> {
        let xc = pose.inverse_transform_point(&o.point);
        let r = (self.camera.project(&xc).ok()? - o.pixel) / self.sigma;
        Some((r, self.camera.project_jacobian(&xc) / self.sigma, xc))
    }
}

impl LeastSquaresProblem for VgPnp<'_> {
    type State = Pose;

    fn cost(&self, pose: &Pose) -> f64 {
        let (rr, _) = self.rotation_residual(pose);
        let invalid = huber_cost((INVALID_RESIDUAL_PX / self.sigma).powi(2), self.delta);
        let visual: f64 = self
            .observations
            .iter()
            .map(|o| self.visual(pose, o).map_or(invalid, |(r, _, _)| huber_cost(r.norm_squared(), self.delta)))
            .sum();
        visual + rr.norm_squared()
    }

    fn linearize(&self, pose: &Pose) -> NormalEquations {
        let mut ne = NormalEquations::new(6, 0);
        let rt = pose.rotation_matrix().transpose();
        for o in self.observations {
            let Some((r, jp, xc)) = self.visual(pose, o) else { continue };
            let mut j = DMatrix::zeros(2, 6);
            j.view_mut((0, 0), (2, 3)).copy_from(&(-jp * rt));
            j.view_mut((0, 3), (2, 3)).copy_from(&(jp * skew(&xc)));
            let w = huber_weight(r.norm_squared(), self.delta);
            ne.add(&DVector::from_column_slice(r.as_slice()), &[(0, j)], None, w);
        }
        let (rr, jr) = self.rotation_residual(pose);
        let mut j = DMatrix::zeros(3, 6);
        j.view_mut((0, 3), (3, 3)).copy_from(&jr);
        ne.add(&DVector::from_column_slice(rr.as_slice()), &[(0, j)], None, 1.0);
        ne
    }

    fn retract(&self, pose: &Pose, d: &DVector<f64>, _: &DVector<f64>) -> Pose {
        Pose::new(
            pose.rotation * quat_from_rotvec(&Vector3::new(d[3], d[4], d[5])),
            pose.position + Vector3::new(d[0], d[1], d[2]),
        )
    }
}

/// Camera pose of `frame` minimizing the gyroscope rotation term plus the
/// robust reprojection error of `observations`.
pub fn vg_pnp(
    frame: usize,
    observations: &[PnpObservation],
    link: &GyroLink,
    camera: &PinholeCamera,
    cfg: &InitConfig,
) -> Result<PnpResult, InitError> {
    if observations.len() < cfg.min_pnp_observations {
        return Err(InitError::InsufficientObservations { frame, count: observations.len() });
    }
    let problem =
        VgPnp { camera, observations, link, sigma: cfg.pixel_sigma, delta: cfg.huber_delta_px / cfg.pixel_sigma };
    let (pose, report) = minimize(&problem, link.predicted_pose(), &cfg.lm)?;
    if !pose.is_finite() || !report.final_cost.is_finite() {
        return Err(InitError::Diverged);
    }
    Ok(PnpResult { pose, report })
}
