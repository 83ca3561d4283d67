//! Synthetic scenes for unit tests.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::types::{Fragment, InitState, SfmEstimate};
use crate::geom::{Landmark, PinholeCamera, Pose};
use crate::imu::{
    preintegrate, preintegrate_between, BiasState, ImuNoise, ImuSample, Preintegration, GRAVITY_MAGNITUDE,
};
use crate::matching::{FeatureTrack, TrackObservation};
use crate::sim::{simulate_fragment, NoiseConfig, SimFragment, SimScene, TrajectoryModel};

/// Points in front of `origin`, spread over roughly the image.
pub(crate) fn points_in_view<R: Rng>(rng: &mut R, origin: &Pose, n: usize, depth: (f64, f64)) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| {
            let z = rng.gen_range(depth.0..depth.1);
            let local = Vector3::new(rng.gen_range(-0.8..0.8) * z, rng.gen_range(-0.5..0.5) * z, z);
            origin.transform_point(&local)
        })
        .collect()
}

/// One track per point (id = point index) with an observation in every
/// camera that sees it; points seen fewer than twice are skipped.
pub(crate) fn tracks_from<R: Rng>(
    rng: &mut R,
    cameras: &[Pose],
    points: &[Vector3<f64>],
    camera: &PinholeCamera,
    noise_px: f64,
) -> Vec<FeatureTrack> {
    let nrm = Normal::new(0.0, noise_px.max(1e-300)).unwrap();
    points
        .iter()
        .enumerate()
        .filter_map(|(id, x)| {
            let obs: Vec<TrackObservation> = cameras
                .iter()
                .enumerate()
                .filter_map(|(f, c)| {
                    let px = camera.project(&c.inverse_transform_point(x)).ok()?;
                    if !camera.contains(&px, 0.0) {
                        return None;
                    }
                    let px = if noise_px > 0.0 { px + Vector2::new(nrm.sample(rng), nrm.sample(rng)) } else { px };
                    Some(TrackObservation { frame: f, pixel: px, normalized: camera.pixel_to_normalized(&px) })
                })
                .collect();
            (obs.len() >= 2).then(|| FeatureTrack::with_observations(id as u64, obs))
        })
        .collect()
}

/// Pre-integration over `duration` whose rotation term is exactly
/// `Exp(rotvec)`, from a constant angular rate plus `gyro_bias`.
pub(crate) fn constant_rate_preintegration(
    rotvec: &Vector3<f64>,
    duration: f64,
    gyro_bias: &Vector3<f64>,
) -> Preintegration {
    let n = (duration * 200.0).round() as usize;
    let w = rotvec / duration + gyro_bias;
    let samples: Vec<ImuSample> =
        (0..=n).map(|k| ImuSample::new(duration * k as f64 / n as f64, w, Vector3::new(0.0, 0.0, 9.81))).collect();
    preintegrate(&samples, &BiasState::zero(), &ImuNoise::default()).unwrap()
}

/// Simulated fragment of `n_kf` keyframes 0.1 s apart starting at `start`,
/// over a scene with 150 landmarks.
pub(crate) fn sim_fragment(model: TrajectoryModel, noise: &NoiseConfig, start: f64, n_kf: usize) -> SimFragment {
    sim_setup(model, noise, start, n_kf).1
}

pub(crate) fn sim_setup(
    model: TrajectoryModel,
    noise: &NoiseConfig,
    start: f64,
    n_kf: usize,
) -> (SimScene, SimFragment) {
    let scene = SimScene::generate(model, 150, noise.seed);
    let times: Vec<f64> = (0..n_kf).map(|k| start + 0.1 * k as f64).collect();
    let sim = simulate_fragment(&scene, noise, &times);
    (scene, sim)
}

/// Fills `sfm` with one landmark per track, anchored at its first
/// observation with the true depth divided by `scale`.
pub(crate) fn truth_landmarks(scene: &SimScene, sim: &SimFragment, sfm: &mut SfmEstimate, scale: f64) {
    let ext = sim.fragment.extrinsic;
    sfm.landmarks.clear();
    sfm.landmark_tracks.clear();
    sfm.inlier_mask.clear();
    for (ti, t) in sim.fragment.tracks.iter().enumerate() {
        let first = t.first().unwrap();
        let cam = sim.truth[first.frame].pose.compose(&ext);
        let depth = cam.inverse_transform_point(&scene.landmarks[t.id as usize]).z;
        sfm.landmarks.push(Landmark {
            anchor_frame: first.frame,
            anchor_observation: first.normalized,
            inverse_depth: scale / depth,
        });
        sfm.landmark_tracks.push(ti);
        sfm.inlier_mask.push(vec![true; t.len()]);
    }
}

/// Pre-integrations between consecutive keyframes.
pub(crate) fn sim_preintegrations(fragment: &Fragment, bias: &BiasState) -> Vec<Preintegration> {
    fragment
        .keyframes
        .windows(2)
        .map(|w| preintegrate_between(&fragment.imu, w[0], w[1], bias, &ImuNoise::default()).unwrap())
        .collect()
}

/// True camera poses in the first camera's frame with positions divided by
/// `scale`, and the matching true alignment state.
pub(crate) fn sfm_from_truth(sim: &SimFragment, scale: f64) -> (SfmEstimate, InitState) {
    let ext = sim.fragment.extrinsic;
    let cams: Vec<Pose> = sim.truth.iter().map(|s| s.pose.compose(&ext)).collect();
    let c0_inv = cams[0].inverse();
    let camera_poses = cams
        .iter()
        .map(|c| {
            let rel = c0_inv.compose(c);
            Pose::new(rel.rotation, rel.position / scale)
        })
        .collect();
    let sfm = SfmEstimate {
        camera_poses,
        landmarks: Vec::new(),
        landmark_tracks: Vec::new(),
        gyro_bias: Vector3::zeros(),
        inlier_mask: Vec::new(),
    };
    let truth = InitState {
        velocities: sim.truth.iter().map(|s| s.pose.rotation.inverse() * s.velocity).collect(),
        scale,
        gravity_c0: cams[0].rotation.inverse() * Vector3::new(0.0, 0.0, GRAVITY_MAGNITUDE),
        gyro_bias: sim.truth[0].gyro_bias,
        accel_bias: sim.truth[0].accel_bias,
    };
    (sfm, truth)
}
