use nalgebra::{Vector2, Vector3};

use super::EvalError;
use crate::geom::{align_trajectories, skew, AlignmentMode, PinholeCamera, Pose};
use crate::matching::FeatureTrack;

/// RMSE of position differences, after aligning `estimate` onto `truth`
/// when `alignment` is given.
pub fn ate(estimate: &[Pose], truth: &[Pose], alignment: Option<AlignmentMode>) -> Result<f64, EvalError> {
    if estimate.len() != truth.len() {
        return Err(EvalError::LengthMismatch(estimate.len(), truth.len()));
    }
    if estimate.is_empty() {
        return Err(EvalError::Empty);
    }
    let aligned = match alignment {
        Some(mode) => {
            align_trajectories(estimate, truth, mode).map_err(|e| EvalError::Alignment(e.to_string()))?.aligned
        }
        None => estimate.to_vec(),
    };
    let sq: f64 = aligned.iter().zip(truth).map(|(a, b)| (a.position - b.position).norm_squared()).sum();
    Ok((sq / truth.len() as f64).sqrt())
}

/// Scale folded into (0, 1] so that over- and under-estimation by the same
/// factor score alike.
pub fn normalized_scale(s: f64) -> Result<f64, EvalError> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(EvalError::NonPositiveScale(s));
    }
    Ok(if s <= 1.0 { s } else { 1.0 / s })
}

/// Mean of `|ŝ' - 1|` over the fragments, in percent.
pub fn scale_error(scales: &[f64]) -> Result<f64, EvalError> {
    if scales.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sum = 0.0;
    for s in scales {
        sum += (normalized_scale(*s)? - 1.0).abs();
    }
    Ok(100.0 * sum / scales.len() as f64)
}

fn check_unit(v: &Vector3<f64>) -> Result<(), EvalError> {
    if (v.norm() - 1.0).abs() > 1e-6 {
        return Err(EvalError::NonUnitVector(v.norm()));
    }
    Ok(())
}

/// Root mean square of the per-frame angles between estimated and true
/// gravity directions, degrees.
pub fn gravity_error(estimate: &[Vector3<f64>], truth: &[Vector3<f64>]) -> Result<f64, EvalError> {
    if estimate.len() != truth.len() {
        return Err(EvalError::LengthMismatch(estimate.len(), truth.len()));
    }
    if estimate.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut sq = 0.0;
    for (a, b) in estimate.iter().zip(truth) {
        check_unit(a)?;
        check_unit(b)?;
        // same angle as the clamped arccos, without its precision loss near 0
        let angle = a.cross(b).norm().atan2(a.dot(b)).to_degrees();
        sq += angle * angle;
    }
    Ok((sq / estimate.len() as f64).sqrt())
}

/// Pixel fundamental matrix with `x_iᵀ F x_j = 0` for camera-to-world poses
/// `pose_i`, `pose_j`.
pub fn fundamental_from_poses(
    pose_i: &Pose,
    pose_j: &Pose,
    camera: &PinholeCamera,
) -> Result<nalgebra::Matrix3<f64>, EvalError> {
    let rel = pose_i.inverse().compose(pose_j);
    let t = rel.position;
    if t.norm() < 1e-12 {
        return Err(EvalError::ZeroBaseline);
    }
    let e = skew(&t.normalize()) * rel.rotation_matrix();
    let k_inv = camera.matrix().try_inverse().expect("valid intrinsics");
    Ok(k_inv.transpose() * e * k_inv)
}

/// Distance in pixels of each `x_j` from the epipolar line of its `x_i`
/// under the true relative pose.
pub fn epipolar_error(
    matches: &[(Vector2<f64>, Vector2<f64>)],
    pose_i: &Pose,
    pose_j: &Pose,
    camera: &PinholeCamera,
) -> Result<Vec<f64>, EvalError> {
    let f = fundamental_from_poses(pose_i, pose_j, camera)?;
    Ok(matches
        .iter()
        .map(|(a, b)| {
            let line = f.transpose() * Vector3::new(a.x, a.y, 1.0);
            let den = (line.x * line.x + line.y * line.y).sqrt();
            if den < 1e-300 {
                return 0.0;
            }
            line.dot(&Vector3::new(b.x, b.y, 1.0)).abs() / den
        })
        .collect())
}

/// `(track length, epipolar error)` of each track's first and last
/// observations; tracks without baseline are skipped. `poses[f]` is the
/// camera-to-world pose of frame `f`.
pub fn track_epipolar_errors(tracks: &[FeatureTrack], poses: &[Pose], camera: &PinholeCamera) -> Vec<(usize, f64)> {
    tracks
        .iter()
        .filter(|t| t.len() >= 2)
        .filter_map(|t| {
            let (a, b) = (t.first()?, t.last()?);
            let e = epipolar_error(&[(a.pixel, b.pixel)], poses.get(a.frame)?, poses.get(b.frame)?, camera).ok()?;
            Some((t.len(), e[0]))
        })
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Median error per track-length bucket `[edges[k], edges[k+1])`; the last
/// bucket is open-ended.
pub fn median_by_length(samples: &[(usize, f64)], edges: &[usize]) -> Vec<(usize, Option<f64>)> {
    edges
        .iter()
        .enumerate()
        .map(|(k, &lo)| {
            let hi = edges.get(k + 1).copied().unwrap_or(usize::MAX);
            let v: Vec<f64> = samples.iter().filter(|(l, _)| *l >= lo && *l < hi).map(|(_, e)| *e).collect();
            (lo, median(&v))
        })
        .collect()
}

/// Empirical CDF as `(value, fraction ≤ value)` pairs.
pub fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter().enumerate().map(|(i, x)| (*x, (i + 1) as f64 / n)).collect()
}
