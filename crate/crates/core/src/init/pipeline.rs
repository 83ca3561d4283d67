//! Per-fragment orchestration: static dispatch, then the motion path from
//! keyframe-pair selection through VI-BA.

use std::collections::HashMap;
use std::time::Instant;

use nalgebra::{UnitQuaternion, Vector3};

use super::align::va_align;
use super::config::PipelineConfig;
use super::keyframe::select_keyframe_pair;
use super::pnp::{vg_pnp, GyroLink, PnpObservation};
use super::two_view::two_view_reconstruct;
use super::types::{FailureStage, Fragment, InitError, InitReport, InitState, SfmEstimate};
use super::vg_ba::vg_ba;
use super::vi_ba::{metric_from_alignment, vi_ba, MetricSolution};
use crate::geom::{triangulate, Landmark, PinholeCamera, Pose};
use crate::imu::{
    camera_rotation_prior, detect_static, preintegrate_between, samples_between, static_init, BiasState,
    Preintegration, GRAVITY_MAGNITUDE,
};
use crate::matching::FeatureTrack;

/// Observations reprojecting farther than this from the SfM model are
/// excluded from bundle adjustment, pixels.
const SFM_INLIER_PX: f64 = 6.0;

struct Failure {
    stage: FailureStage,
    error: String,
}

fn fail(stage: FailureStage) -> impl Fn(InitError) -> Failure {
    move |e| Failure { stage, error: e.to_string() }
}

/// Runs the stage closure and records its wall time.
fn timed<T>(report: &mut InitReport, stage: FailureStage, f: impl FnOnce(&mut InitReport) -> T) -> T {
    let start = Instant::now();
    let out = f(report);
    report.stage_times_ms.push((stage, start.elapsed().as_secs_f64() * 1e3));
    out
}

/// Initializes one fragment. Never panics on bad input; failures are
/// reported with the stage that raised them.
pub fn initialize_fragment(fragment: &Fragment, cfg: &PipelineConfig) -> InitReport {
    let mut report = InitReport::new();
    let outcome = match fragment.validate() {
        Err(reason) => Err(Failure { stage: FailureStage::Preprocess, error: reason }),
        Ok(()) => {
            let span =
                samples_between(&fragment.imu, fragment.keyframes[0], fragment.keyframes[fragment.num_keyframes() - 1]);
            let is_static =
                span.as_ref().map(|s| detect_static(&fragment.tracks, s, &cfg.static_detection)).unwrap_or(false);
            if is_static {
                report.used_static_path = true;
                timed(&mut report, FailureStage::Static, |_| static_path(fragment, cfg))
            } else {
                motion_path(fragment, cfg, &mut report)
            }
        }
    };
    match outcome {
        Ok(sol) => {
            report.success = sol.state.is_valid();
            if !report.success {
                report.failure_stage = Some(FailureStage::VIBA);
                report.failure_reason = Some("solution failed validity checks".into());
            }
            report.metric_poses = sol.body_poses;
            report.world_velocities = sol.world_velocities;
            report.state = Some(sol.state);
        }
        Err(f) => {
            log::debug!("fragment failed at {}: {}", f.stage.as_str(), f.error);
            report.failure_stage = Some(f.stage);
            report.failure_reason = Some(f.error);
        }
    }
    report
}

/// Gravity from the accelerometer at rest; every keyframe shares one pose
/// and the velocities are zero.
fn static_path(fragment: &Fragment, cfg: &PipelineConfig) -> Result<MetricSolution, Failure> {
    let n = fragment.num_keyframes();
    let samples = samples_between(&fragment.imu, fragment.keyframes[0], fragment.keyframes[n - 1])
        .map_err(|e| fail(FailureStage::Static)(e.into()))?;
    let init =
        static_init(&samples, cfg.static_detection.min_window_s).map_err(|e| fail(FailureStage::Static)(e.into()))?;
    let attitude = init.attitude();
    let c0 = attitude * fragment.extrinsic.rotation;
    Ok(MetricSolution {
        body_poses: vec![Pose::new(attitude, Vector3::zeros()); n],
        world_velocities: vec![Vector3::zeros(); n],
        inverse_depths: Vec::new(),
        state: InitState {
            velocities: vec![Vector3::zeros(); n],
            scale: 1.0,
            gravity_c0: c0.inverse() * Vector3::new(0.0, 0.0, GRAVITY_MAGNITUDE),
            gyro_bias: init.bias.gyro_bias,
            accel_bias: init.bias.accel_bias,
        },
    })
}

fn motion_path(fragment: &Fragment, cfg: &PipelineConfig, report: &mut InitReport) -> Result<MetricSolution, Failure> {
    let init_cfg = &cfg.init;
    let ext = &fragment.extrinsic;
    let camera = &fragment.camera;

    let (pre, rotations) = timed(report, FailureStage::Preprocess, |_| preprocess(fragment, cfg))
        .map_err(fail(FailureStage::Preprocess))?;

    let sfm = timed(report, FailureStage::TwoView, |r| {
        let pair = select_keyframe_pair(&fragment.tracks, &rotations, camera, init_cfg.min_common_tracks)?;
        r.parallax_px = pair.parallax_px;
        let prior = rotations[pair.i].inverse() * rotations[pair.j];
        let prior = init_cfg.ablation.two_point.then_some(&prior);
        let tv = two_view_reconstruct(&fragment.tracks, camera, &pair, prior, init_cfg)?;
        Ok::<_, InitError>((pair, tv))
    })
    .map_err(fail(FailureStage::TwoView))?;
    let (pair, tv) = sfm;

    let estimate = timed(report, FailureStage::PnP, |r| {
        incremental_sfm(fragment, &pre, pair.i, pair.j, tv.relative_pose, tv.points, cfg, r)
    })
    .map_err(fail(FailureStage::PnP))?;

    let estimate = timed(report, FailureStage::VGBA, |r| {
        let (est, lm) = vg_ba(&estimate, &fragment.tracks, &pre, camera, ext, init_cfg.ablation.vg_ba, init_cfg)?;
        r.diagnostics.push(lm.diagnostics("vg_ba"));
        Ok::<_, InitError>(est)
    })
    .map_err(fail(FailureStage::VGBA))?;

    let bias = BiasState::new(estimate.gyro_bias, Vector3::zeros());
    let pre: Vec<Preintegration> = pre.iter().map(|p| p.rebias(&bias)).collect();

    let aligned = timed(report, FailureStage::Align, |_| va_align(&estimate, &pre, ext, init_cfg))
        .map_err(fail(FailureStage::Align))?;

    if !init_cfg.ablation.vi_ba {
        return Ok(metric_from_alignment(&estimate, &aligned, ext));
    }
    timed(report, FailureStage::VIBA, |r| {
        let (sol, lm) = vi_ba(&estimate, &fragment.tracks, &aligned, &pre, camera, ext, r.parallax_px, init_cfg)?;
        r.diagnostics.push(lm.diagnostics("vi_ba"));
        Ok::<_, InitError>(sol)
    })
    .map_err(fail(FailureStage::VIBA))
}

/// Pre-integrations between consecutive keyframes and the gyro-propagated
/// camera rotations relative to the first camera.
fn preprocess(
    fragment: &Fragment,
    cfg: &PipelineConfig,
) -> Result<(Vec<Preintegration>, Vec<UnitQuaternion<f64>>), InitError> {
    let zero = BiasState::zero();
    let pre = fragment
        .keyframes
        .windows(2)
        .map(|w| preintegrate_between(&fragment.imu, w[0], w[1], &zero, &cfg.imu))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rotations = vec![UnitQuaternion::identity()];
    for p in &pre {
        let last = rotations[rotations.len() - 1];
        rotations.push(last * camera_rotation_prior(&p.gamma, &fragment.extrinsic));
    }
    Ok((pre, rotations))
}

/// Poses the remaining keyframes by VG-PnP outward from the pair,
/// triangulating newly visible tracks as frames are added, then expresses
/// everything in the first camera's frame.
#[allow(clippy::too_many_arguments)]
fn incremental_sfm(
    fragment: &Fragment,
    pre: &[Preintegration],
    i: usize,
    j: usize,
    relative: Pose,
    points: Vec<(usize, Vector3<f64>)>,
    cfg: &PipelineConfig,
    report: &mut InitReport,
) -> Result<SfmEstimate, InitError> {
    let n = fragment.num_keyframes();
    let tracks = &fragment.tracks;
    let min_angle = cfg.init.min_ray_angle_deg.to_radians();
    let mut poses: Vec<Option<Pose>> = vec![None; n];
    poses[i] = Some(Pose::identity());
    poses[j] = Some(relative);
    let mut structure: HashMap<usize, Vector3<f64>> = points.into_iter().collect();

    let order: Vec<(usize, usize)> =
        (i + 1..n).filter(|&k| k != j).map(|k| (k, k - 1)).chain((0..i).rev().map(|k| (k, k + 1))).collect();
    for (k, neighbor) in order {
        let observations: Vec<PnpObservation> = tracks
            .iter()
            .enumerate()
            .filter_map(|(ti, t)| {
                let o = t.observation_in(k)?;
                Some(PnpObservation { point: *structure.get(&ti)?, pixel: o.pixel })
            })
            .collect();
        let forward = neighbor < k;
        let link = GyroLink {
            preintegration: &pre[k.min(neighbor)],
            neighbor: poses[neighbor].expect("neighbors are posed first"),
            neighbor_first: forward,
            gyro_bias: Vector3::zeros(),
            extrinsic: fragment.extrinsic,
        };
        let res = vg_pnp(k, &observations, &link, &fragment.camera, &cfg.init)?;
        report.diagnostics.push(res.report.diagnostics(&format!("vg_pnp[{k}]")));
        poses[k] = Some(res.pose);
        extend_structure(tracks, &poses, k, min_angle, &mut structure);
    }

    let poses: Vec<Pose> = poses.into_iter().map(|p| p.expect("every frame posed")).collect();
    let to_c0 = poses[0].inverse();
    let camera_poses: Vec<Pose> = poses.iter().map(|p| to_c0.compose(p)).collect();
    let structure = structure.into_iter().map(|(t, x)| (t, to_c0.transform_point(&x))).collect();
    let est = build_estimate(tracks, &camera_poses, structure, &fragment.camera);
    if est.landmarks.len() < cfg.init.min_landmarks {
        return Err(InitError::TooFewLandmarks(est.landmarks.len()));
    }
    Ok(est)
}

/// Triangulates tracks seen in `k` that have no point yet, pairing `k`
/// with the posed frame farthest from it in the sequence.
fn extend_structure(
    tracks: &[FeatureTrack],
    poses: &[Option<Pose>],
    k: usize,
    min_angle: f64,
    structure: &mut HashMap<usize, Vector3<f64>>,
) {
    let pk = poses[k].expect("frame just posed");
    for (ti, t) in tracks.iter().enumerate() {
        if structure.contains_key(&ti) {
            continue;
        }
        let Some(ok) = t.observation_in(k) else { continue };
        let other = t
            .observations
            .iter()
            .filter(|o| o.frame != k && poses[o.frame].is_some())
            .max_by_key(|o| o.frame.abs_diff(k));
        if let Some(o) = other {
            let po = poses[o.frame].expect("filtered on posed frames");
            if let Some(x) = triangulate(&po, &pk, &o.normalized, &ok.normalized, min_angle).good_point() {
                structure.insert(ti, x);
            }
        }
    }
}

/// Converts triangulated points into anchored inverse-depth landmarks and
/// marks observations that reproject within the inlier gate. Points behind
/// any observing camera are dropped.
fn build_estimate(
    tracks: &[FeatureTrack],
    camera_poses: &[Pose],
    structure: HashMap<usize, Vector3<f64>>,
    camera: &PinholeCamera,
) -> SfmEstimate {
    let mut inlier_mask: Vec<Vec<bool>> = tracks.iter().map(|t| vec![false; t.len()]).collect();
    let mut ids: Vec<usize> = structure.keys().copied().collect();
    ids.sort_unstable();
    let mut landmarks = Vec::new();
    let mut landmark_tracks = Vec::new();
    for ti in ids {
        let x = structure[&ti];
        let t = &tracks[ti];
        let mut mask = Vec::with_capacity(t.len());
        let mut cheiral = true;
        for o in &t.observations {
            let xc = camera_poses[o.frame].inverse_transform_point(&x);
            if xc.z <= 0.0 {
                cheiral = false;
                break;
            }
            let ok = camera.project(&xc).is_ok_and(|px| (px - o.pixel).norm() < SFM_INLIER_PX);
            mask.push(ok);
        }
        if !cheiral || mask.iter().filter(|m| **m).count() < 2 {
            continue;
        }
        let anchor = mask.iter().position(|m| *m).expect("at least two inliers");
        let o = &t.observations[anchor];
        let depth = camera_poses[o.frame].inverse_transform_point(&x).z;
        landmarks.push(Landmark {
            anchor_frame: o.frame,
            anchor_observation: o.normalized,
            inverse_depth: 1.0 / depth,
        });
        landmark_tracks.push(ti);
        inlier_mask[ti] = mask;
    }
    SfmEstimate {
        camera_poses: camera_poses.to_vec(),
        landmarks,
        landmark_tracks,
        gyro_bias: Vector3::zeros(),
        inlier_mask,
    }
}
