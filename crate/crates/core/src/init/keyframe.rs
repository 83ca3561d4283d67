use nalgebra::{UnitQuaternion, Vector2, Vector3};

use super::types::InitError;
use crate::geom::PinholeCamera;
use crate::matching::FeatureTrack;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframePair {
    pub i: usize,
    pub j: usize,
    /// Mean rotation-compensated displacement, pixels.
    pub parallax_px: f64,
    pub common_tracks: usize,
}

/// Rotation-compensated displacements between frames `i` and `j`.
/// `rot_i`, `rot_j` are camera-to-reference rotations.
pub fn compensated_displacements(
    tracks: &[FeatureTrack],
    i: usize,
    j: usize,
    rot_i: &UnitQuaternion<f64>,
    rot_j: &UnitQuaternion<f64>,
    camera: &PinholeCamera,
) -> Vec<f64> {
    let r_ji = rot_j.inverse() * rot_i;
    tracks
        .iter()
        .filter_map(|t| {
            let (oi, oj) = (t.observation_in(i)?, t.observation_in(j)?);
            let ray = r_ji * Vector3::new(oi.normalized.x, oi.normalized.y, 1.0);
            if ray.z <= 0.0 {
                return None;
            }
            let px = camera.normalized_to_pixel(&Vector2::new(ray.x / ray.z, ray.y / ray.z));
            Some((px - oj.pixel).norm())
        })
        .collect()
}

/// Pair of frames with the largest mean rotation-compensated parallax among
/// pairs sharing at least `min_common` tracks.
pub fn select_keyframe_pair(
    tracks: &[FeatureTrack],
    camera_rotations: &[UnitQuaternion<f64>],
    camera: &PinholeCamera,
    min_common: usize,
) -> Result<KeyframePair, InitError> {
    let n = camera_rotations.len();
    let mut best: Option<KeyframePair> = None;
    let mut most_common = 0;
    for i in 0..n {
        for j in i + 1..n {
            let d = compensated_displacements(tracks, i, j, &camera_rotations[i], &camera_rotations[j], camera);
            most_common = most_common.max(d.len());
            if d.len() < min_common.max(1) {
                continue;
            }
            let p = d.iter().sum::<f64>() / d.len() as f64;
            let better = match &best {
                None => true,
                Some(b) => p > b.parallax_px || (p == b.parallax_px && j - i > b.j - b.i),
            };
            if better {
                best = Some(KeyframePair { i, j, parallax_px: p, common_tracks: d.len() });
            }
        }
    }
    best.ok_or(InitError::InsufficientCommonTracks(most_common))
}
