use nalgebra::{UnitQuaternion, Vector2};
use serde::{Deserialize, Serialize};

use super::{
    ransac_outlier_reject, Descriptor, FeatureTrack, FrameFeatures, FrontEnd, MatchConfig, MatchError, MatchKind,
    MatchOutcome, MatchSet, TrackTable,
};
use crate::geom::{PinholeCamera, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchStrategy {
    /// 3D projection, then descriptors around flow, then flow alone.
    Hybrid,
    /// Descriptors searched around the previous location; no flow.
    DescriptorOnly,
    /// Flow alone.
    FlowOnly,
}

impl MatchStrategy {
    pub const ALL: [MatchStrategy; 3] = [MatchStrategy::Hybrid, MatchStrategy::DescriptorOnly, MatchStrategy::FlowOnly];

    pub fn label(&self) -> &'static str {
        match self {
            MatchStrategy::Hybrid => "hybrid",
            MatchStrategy::DescriptorOnly => "descriptor-only",
            MatchStrategy::FlowOnly => "flow-only",
        }
    }
}

/// Motion priors for the frame being matched.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MatchPrior {
    /// Camera-to-world pose of the current frame.
    pub pose: Option<Pose>,
    /// Rotation taking current-camera vectors to the previous camera.
    pub relative_rotation: Option<UnitQuaternion<f64>>,
}

/// Best unused keypoint within `radius` of `center` whose descriptor passes
/// the Hamming cap and the ratio test against the runner-up.
pub fn knn_match(
    descriptor: &Descriptor,
    features: &FrameFeatures,
    used: &[bool],
    center: &Vector2<f64>,
    radius: f64,
    cfg: &MatchConfig,
) -> Result<usize, MatchError> {
    let mut best: Option<(u32, usize)> = None;
    let mut second: Option<u32> = None;
    for (k, (kp, d)) in features.keypoints.iter().zip(&features.descriptors).enumerate() {
        if used[k] || (kp - center).norm() > radius {
            continue;
        }
        let dist = descriptor.hamming(d);
        match best {
            Some((b, _)) if dist >= b => second = Some(second.map_or(dist, |s| s.min(dist))),
            _ => {
                second = best.map(|b| b.0);
                best = Some((dist, k));
            }
        }
    }
    let (dist, k) = best.ok_or(MatchError::NoDescriptorMatch)?;
    if dist > cfg.max_hamming {
        return Err(MatchError::NoDescriptorMatch);
    }
    if let Some(s) = second {
        if dist as f64 >= cfg.ratio * s as f64 {
            return Err(MatchError::NoDescriptorMatch);
        }
    }
    Ok(k)
}

/// Keypoint matching a triangulated track around the projection of its
/// landmark under the pose prior (camera-to-world).
pub fn match_with_3d_projection(
    track: &FeatureTrack,
    pose: &Pose,
    camera: &PinholeCamera,
    features: &FrameFeatures,
    used: &[bool],
    cfg: &MatchConfig,
) -> Result<usize, MatchError> {
    let landmark = track.landmark.ok_or(MatchError::ProjectionOutOfImage)?;
    let px = camera.project(&pose.inverse_transform_point(&landmark)).map_err(|_| MatchError::ProjectionOutOfImage)?;
    if !camera.contains(&px, 0.0) {
        return Err(MatchError::ProjectionOutOfImage);
    }
    let d = track.descriptor.as_ref().ok_or(MatchError::NoDescriptorMatch)?;
    knn_match(d, features, used, &px, cfg.search_radius_px, cfg)
}

/// Descriptor search around the flow prediction (or the previous location
/// when flow failed); falls back to the flow prediction itself. Returns the
/// outcome and the claimed keypoint, if any.
pub fn match_with_2d_prior(
    track: &FeatureTrack,
    flow: Option<Vector2<f64>>,
    features: &FrameFeatures,
    used: &[bool],
    cfg: &MatchConfig,
) -> Result<(MatchOutcome, Option<usize>), MatchError> {
    let center = flow.or_else(|| track.last().map(|o| o.pixel)).ok_or(MatchError::FlowLost)?;
    if let Some(d) = &track.descriptor {
        if let Ok(k) = knn_match(d, features, used, &center, cfg.search_radius_px, cfg) {
            let location = features.keypoints[k];
            return Ok((MatchOutcome::Matched { matched_by: MatchKind::DescriptorWith2DPrior, location }, Some(k)));
        }
    }
    match flow {
        Some(location) => Ok((MatchOutcome::Matched { matched_by: MatchKind::FlowFallback, location }, None)),
        None => Err(MatchError::FlowLost),
    }
}

/// Hybrid matching of frame `cur` against the tracks live in `prev`.
pub fn hyb_match(
    table: &mut TrackTable,
    prev: Option<usize>,
    cur: usize,
    prior: &MatchPrior,
    frontend: &mut dyn FrontEnd,
    cfg: &MatchConfig,
) -> MatchSet {
    match_frame(table, prev, cur, prior, frontend, MatchStrategy::Hybrid, cfg)
}

/// Matches frame `cur` with the given strategy, rejects epipolar outliers,
/// updates the table and spawns tracks from unused detections.
pub fn match_frame(
    table: &mut TrackTable,
    prev: Option<usize>,
    cur: usize,
    prior: &MatchPrior,
    frontend: &mut dyn FrontEnd,
    strategy: MatchStrategy,
    cfg: &MatchConfig,
) -> MatchSet {
    let mut features = frontend.detect_and_describe(cur);
    features.truncate(cfg.max_features);
    let mut used = vec![false; features.len()];
    let live = prev.map(|p| table.live_in(p)).unwrap_or_default();
    // (track index, outcome, claimed keypoint)
    let mut results: Vec<(usize, MatchOutcome, Option<usize>)> = Vec::with_capacity(live.len());
    let mut pending = Vec::new();

    if strategy == MatchStrategy::Hybrid {
        if let Some(pose) = &prior.pose {
            for &i in &live {
                let t = &table.tracks()[i];
                if !t.is_triangulated() {
                    pending.push(i);
                    continue;
                }
                match match_with_3d_projection(t, pose, &table.camera, &features, &used, cfg) {
                    Ok(k) => {
                        used[k] = true;
                        let location = features.keypoints[k];
                        let o = MatchOutcome::Matched { matched_by: MatchKind::Projection3D, location };
                        results.push((i, o, Some(k)));
                    }
                    Err(_) => pending.push(i),
                }
            }
        } else {
            pending.clone_from(&live);
        }
    } else {
        pending.clone_from(&live);
    }

    let flows = match (strategy, prev) {
        (MatchStrategy::DescriptorOnly, _) | (_, None) => vec![None; pending.len()],
        (_, Some(p)) => {
            let pts: Vec<_> = pending.iter().map(|&i| table.tracks()[i].last().unwrap().pixel).collect();
            let f = frontend.flow(p, cur, &pts);
            debug_assert_eq!(f.len(), pts.len());
            f
        }
    };

    for (&i, flow) in pending.iter().zip(flows) {
        let t = &table.tracks()[i];
        let (outcome, claimed) = match strategy {
            MatchStrategy::Hybrid => {
                match_with_2d_prior(t, flow, &features, &used, cfg).unwrap_or((MatchOutcome::Dropped, None))
            }
            MatchStrategy::FlowOnly => match flow {
                Some(location) => (MatchOutcome::Matched { matched_by: MatchKind::FlowFallback, location }, None),
                None => (MatchOutcome::Dropped, None),
            },
            MatchStrategy::DescriptorOnly => {
                let center = t.last().unwrap().pixel;
                match t
                    .descriptor
                    .as_ref()
                    .map(|d| knn_match(d, &features, &used, &center, cfg.descriptor_only_radius_px, cfg))
                {
                    Some(Ok(k)) => {
                        let location = features.keypoints[k];
                        (MatchOutcome::Matched { matched_by: MatchKind::DescriptorWith2DPrior, location }, Some(k))
                    }
                    _ => (MatchOutcome::Dropped, None),
                }
            }
        };
        if let Some(k) = claimed {
            used[k] = true;
        }
        results.push((i, outcome, claimed));
    }

    // epipolar check over everything matched this frame
    let matched: Vec<usize> = (0..results.len()).filter(|&r| results[r].1 != MatchOutcome::Dropped).collect();
    let pairs: Vec<_> = matched
        .iter()
        .map(|&r| (table.tracks()[results[r].0].last().unwrap().pixel, results[r].1.location().unwrap()))
        .collect();
    let mut set = MatchSet { frame: cur, ..MatchSet::default() };
    if !pairs.is_empty() {
        match ransac_outlier_reject(&pairs, &table.camera, prior.relative_rotation.as_ref(), cfg) {
            Ok(out) => {
                for (&r, inlier) in matched.iter().zip(&out.inliers) {
                    if !inlier {
                        if let Some(k) = results[r].2 {
                            used[k] = false;
                        }
                        results[r].1 = MatchOutcome::Dropped;
                        results[r].2 = None;
                        set.rejected_by_ransac += 1;
                    }
                }
            }
            Err(_) => set.too_few_matches = true,
        }
    }

    results.sort_by_key(|r| r.0);
    for (i, outcome, claimed) in &results {
        match outcome {
            MatchOutcome::Matched { location, .. } => {
                let d = claimed.map(|k| features.descriptors[k]);
                table.observe(*i, cur, *location, d);
            }
            MatchOutcome::Dropped => table.drop_track(*i),
        }
        set.outcomes.push((table.tracks()[*i].id, *outcome));
    }
    table.retire_stale(cur);

    set.new_tracks = spawn(table, cur, &features, &used, cfg);
    set
}

/// Runs `strategy` over frames `0..n_frames`. When `poses` (camera-to-world)
/// are given they serve as pose and rotation priors and tracks are
/// triangulated against them as they grow.
pub fn track_sequence(
    frontend: &mut dyn FrontEnd,
    camera: PinholeCamera,
    n_frames: usize,
    poses: Option<&[Pose]>,
    strategy: MatchStrategy,
    cfg: &MatchConfig,
) -> (TrackTable, Vec<MatchSet>) {
    let mut table = TrackTable::new(camera);
    let mut sets = Vec::with_capacity(n_frames);
    let known: Vec<Option<Pose>> = (0..n_frames).map(|f| poses.and_then(|p| p.get(f).copied())).collect();
    for cur in 0..n_frames {
        let prev = cur.checked_sub(1);
        let prior = MatchPrior {
            pose: known[cur],
            relative_rotation: prev.and_then(|p| Some(known[p]?.rotation.inverse() * known[cur]?.rotation)),
        };
        sets.push(match_frame(&mut table, prev, cur, &prior, frontend, strategy, cfg));
        if poses.is_some() {
            table.triangulate(&known, TRIANGULATION_MIN_RAY_ANGLE);
        }
    }
    (table, sets)
}

const TRIANGULATION_MIN_RAY_ANGLE: f64 = 0.5 * std::f64::consts::PI / 180.0;

/// Starts tracks at unused detections, strongest first, keeping them apart
/// from live tracks and each other, until `min_tracks` are live.
fn spawn(table: &mut TrackTable, cur: usize, features: &FrameFeatures, used: &[bool], cfg: &MatchConfig) -> Vec<u64> {
    let mut occupied: Vec<Vector2<f64>> =
        table.live_in(cur).iter().map(|&i| table.tracks()[i].last().unwrap().pixel).collect();
    let mut spawned = Vec::new();
    for (k, kp) in features.keypoints.iter().enumerate() {
        if occupied.len() >= cfg.min_tracks {
            break;
        }
        if used[k] || occupied.iter().any(|o| (o - kp).norm() < cfg.spawn_separation_px) {
            continue;
        }
        spawned.push(table.spawn(cur, *kp, Some(features.descriptors[k])));
        occupied.push(*kp);
    }
    spawned
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc(seed: u64) -> Descriptor {
        let mut x = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut d = [0u64; 4];
        for w in d.iter_mut() {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            *w = x;
        }
        Descriptor(d)
    }

    fn flip(d: &Descriptor, bits: u32) -> Descriptor {
        let mut out = *d;
        out.0[0] ^= (1u64 << bits) - 1;
        out
    }

    fn features(points: &[(f64, f64, Descriptor)]) -> FrameFeatures {
        FrameFeatures {
            frame: 1,
            keypoints: points.iter().map(|p| Vector2::new(p.0, p.1)).collect(),
            descriptors: points.iter().map(|p| p.2).collect(),
        }
    }

    #[test]
    fn ratio_test_rejects_ambiguous_match() {
        let cfg = MatchConfig::default();
        let q = desc(1);
        let center = Vector2::new(100.0, 100.0);
        // best 10 vs runner-up 12 fails 0.7
        let f = features(&[(101.0, 100.0, flip(&q, 10)), (99.0, 100.0, flip(&q, 12))]);
        assert_eq!(knn_match(&q, &f, &[false; 2], &center, 10.0, &cfg), Err(MatchError::NoDescriptorMatch));
        // best 5 vs 40 passes
        let f = features(&[(101.0, 100.0, flip(&q, 5)), (99.0, 100.0, flip(&q, 40))]);
        assert_eq!(knn_match(&q, &f, &[false; 2], &center, 10.0, &cfg), Ok(0));
        // the runner-up outside the window does not count
        let f = features(&[(101.0, 100.0, flip(&q, 10)), (130.0, 100.0, flip(&q, 12))]);
        assert_eq!(knn_match(&q, &f, &[false; 2], &center, 10.0, &cfg), Ok(0));
        // claimed keypoints are skipped
        assert_eq!(knn_match(&q, &f, &[true, false], &center, 10.0, &cfg), Err(MatchError::NoDescriptorMatch));
    }

    #[test]
    fn hamming_cap_applies() {
        let cfg = MatchConfig::default();
        let q = desc(2);
        let f = features(&[(100.0, 100.0, flip(&q, 63)), (100.0, 100.0, flip(&q, 63))]);
        let mut far = f.clone();
        far.truncate(1);
        far.descriptors[0].0[1] ^= u64::MAX;
        assert!(knn_match(&q, &far, &[false], &Vector2::new(100.0, 100.0), 10.0, &cfg).is_err());
    }

    #[test]
    fn flow_fallback_when_descriptor_fails() {
        let cfg = MatchConfig::default();
        let mut track = FeatureTrack::new(0);
        track.descriptor = Some(desc(3));
        track.push(super::super::TrackObservation {
            frame: 0,
            pixel: Vector2::new(50.0, 50.0),
            normalized: Vector2::zeros(),
        });
        let f = features(&[(60.0, 50.0, desc(99))]);
        let flow = Some(Vector2::new(60.5, 50.0));
        let (o, k) = match_with_2d_prior(&track, flow, &f, &[false], &cfg).unwrap();
        assert_eq!(o, MatchOutcome::Matched { matched_by: MatchKind::FlowFallback, location: flow.unwrap() });
        assert_eq!(k, None);
        assert_eq!(match_with_2d_prior(&track, None, &f, &[false], &cfg), Err(MatchError::FlowLost));

        let f = features(&[(60.0, 50.0, desc(3))]);
        let (o, k) = match_with_2d_prior(&track, flow, &f, &[false], &cfg).unwrap();
        assert_eq!(o.location(), Some(Vector2::new(60.0, 50.0)));
        assert_eq!(k, Some(0));
    }

    #[test]
    fn projection_outside_image_reported() {
        let cfg = MatchConfig::default();
        let mut track = FeatureTrack::new(0);
        track.descriptor = Some(desc(4));
        track.landmark = Some(nalgebra::Vector3::new(0.0, 0.0, -5.0));
        let f = features(&[]);
        let r = match_with_3d_projection(&track, &Pose::identity(), &PinholeCamera::euroc(), &f, &[], &cfg);
        assert_eq!(r, Err(MatchError::ProjectionOutOfImage));
    }
}
