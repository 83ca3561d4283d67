use nalgebra::{UnitQuaternion, Vector3};

use super::config::InitConfig;
use super::five_point::five_point_ransac;
use super::keyframe::KeyframePair;
use super::two_point::{two_point_ransac, Correspondence};
use super::types::InitError;
use crate::geom::{triangulate, PinholeCamera, Pose};
use crate::matching::FeatureTrack;

#[derive(Debug, Clone)]
pub struct TwoViewResult {
    /// Camera j in camera i's frame, unit-norm translation.
    pub relative_pose: Pose,
    /// Track index and point in camera i's frame.
    pub points: Vec<(usize, Vector3<f64>)>,
    /// Tracks consistent with the epipolar model.
    pub inlier_tracks: Vec<usize>,
}

/// Relative pose of the keyframe pair and the structure it triangulates.
/// With a rotation prior (camera j to camera i) the translation comes from
/// 2-point RANSAC; without one a visual-only 5-point solver is used.
pub fn two_view_reconstruct(
    tracks: &[FeatureTrack],
    camera: &PinholeCamera,
    pair: &KeyframePair,
    rotation_prior: Option<&UnitQuaternion<f64>>,
    cfg: &InitConfig,
) -> Result<TwoViewResult, InitError> {
    let mut ids = Vec::new();
    let mut corr: Vec<Correspondence> = Vec::new();
    for (k, t) in tracks.iter().enumerate() {
        if let (Some(a), Some(b)) = (t.observation_in(pair.i), t.observation_in(pair.j)) {
            ids.push(k);
            corr.push((a.normalized, b.normalized));
        }
    }
    let focal = camera.mean_focal();
    let (relative_pose, inliers) = match rotation_prior {
        Some(r) => {
            let res = two_point_ransac(&corr, r, focal, &cfg.ransac)?;
            (Pose::new(*r, res.translation), res.inliers)
        }
        None => {
            let res = five_point_ransac(&corr, focal, &cfg.ransac)?;
            (Pose::new(res.rotation, res.translation), res.inliers)
        }
    };

    let min_angle = cfg.min_ray_angle_deg.to_radians();
    let origin = Pose::identity();
    let mut points = Vec::new();
    let mut inlier_tracks = Vec::new();
    for ((k, c), _) in ids.iter().zip(&corr).zip(&inliers).filter(|(_, m)| **m) {
        inlier_tracks.push(*k);
        if let Some(p) = triangulate(&origin, &relative_pose, &c.0, &c.1, min_angle).good_point() {
            points.push((*k, p));
        }
    }
    if points.len() < cfg.min_landmarks {
        return Err(InitError::TooFewLandmarks(points.len()));
    }
    Ok(TwoViewResult { relative_pose, points, inlier_tracks })
}
