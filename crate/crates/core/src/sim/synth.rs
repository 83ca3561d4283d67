use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::trajectory::{Trajectory, TrajectoryModel};
use crate::geom::{PinholeCamera, Pose};
use crate::imu::{ImuNoise, ImuSample, GRAVITY_MAGNITUDE};
use crate::init::Fragment;
use crate::io::{Calibration, GroundTruthState, Sequence};
use crate::matching::{FeatureTrack, TrackObservation};

/// Sensor noise and injected biases. Densities are continuous-time; the
/// per-sample std is `density · √rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// rad/s/√Hz.
    pub gyro_noise_std: f64,
    /// m/s²/√Hz.
    pub accel_noise_std: f64,
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    pub pixel_noise_std: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::zero()
    }
}

impl NoiseConfig {
    pub fn zero() -> Self {
        Self {
            gyro_noise_std: 0.0,
            accel_noise_std: 0.0,
            gyro_bias: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
            pixel_noise_std: 0.0,
            seed: 0,
        }
    }

    /// EuRoC-grade IMU densities with the given pixel noise.
    pub fn realistic(pixel_noise_std: f64, seed: u64) -> Self {
        let n = ImuNoise::default();
        Self {
            gyro_noise_std: n.gyro_noise_density,
            accel_noise_std: n.accel_noise_density,
            pixel_noise_std,
            seed,
            ..Self::zero()
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.gyro_noise_std, self.accel_noise_std, self.pixel_noise_std].iter().all(|v| *v >= 0.0 && v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScene {
    pub landmarks: Vec<Vector3<f64>>,
    pub camera: PinholeCamera,
    /// Camera-to-IMU.
    pub extrinsic: Pose,
    pub trajectory: TrajectoryModel,
}

impl SimScene {
    /// EuRoC camera and extrinsic with `n_landmarks` placed uniformly in a
    /// box 2-10 m ahead of the mean optical axis. Trajectories without a
    /// dominant viewing direction get landmarks seeded along the path.
    pub fn generate(trajectory: TrajectoryModel, n_landmarks: usize, seed: u64) -> Self {
        let camera = PinholeCamera::euroc();
        let extrinsic = super::euroc_extrinsic();
        let tr = trajectory.build();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let steps = 50;
        let cams: Vec<Pose> =
            (0..=steps).map(|k| tr.state(tr.duration * k as f64 / steps as f64).pose.compose(&extrinsic)).collect();
        let axis: Vector3<f64> =
            cams.iter().map(|c| c.rotation * Vector3::z()).sum::<Vector3<f64>>() / cams.len() as f64;
        let center: Vector3<f64> = cams.iter().map(|c| c.position).sum::<Vector3<f64>>() / cams.len() as f64;

        let landmarks = if axis.norm() > 0.5 {
            let z = axis.normalize();
            let helper = if z.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
            let x = helper.cross(&z).normalize();
            let y = z.cross(&x);
            (0..n_landmarks)
                .map(|_| {
                    center + z * rng.gen_range(2.0..10.0) + x * rng.gen_range(-4.0..4.0) + y * rng.gen_range(-3.0..3.0)
                })
                .collect()
        } else {
            (0..n_landmarks)
                .map(|_| {
                    let c = &cams[rng.gen_range(0..cams.len())];
                    let d = rng.gen_range(2.0..10.0);
                    let local = Vector3::new(rng.gen_range(-0.7..0.7) * d, rng.gen_range(-0.45..0.45) * d, d);
                    c.transform_point(&local)
                })
                .collect()
        };
        Self { landmarks, camera, extrinsic, trajectory }
    }

    pub fn camera_pose(&self, trajectory: &Trajectory, t: f64) -> Pose {
        trajectory.state(t).pose.compose(&self.extrinsic)
    }
}

fn gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, GRAVITY_MAGNITUDE)
}

/// IMU samples on an integer-nanosecond grid over the trajectory and the
/// true state at each sample.
pub fn synth_imu(scene: &SimScene, noise: &NoiseConfig, rate: f64) -> (Vec<ImuSample>, Vec<GroundTruthState>) {
    let tr = scene.trajectory.build();
    let period_ns = (1e9 / rate).round() as i64;
    let n = (tr.duration * 1e9 / period_ns as f64).floor() as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let gyro_n = Normal::new(0.0, (noise.gyro_noise_std * rate.sqrt()).max(f64::MIN_POSITIVE)).unwrap();
    let accel_n = Normal::new(0.0, (noise.accel_noise_std * rate.sqrt()).max(f64::MIN_POSITIVE)).unwrap();
    let mut samples = Vec::with_capacity(n as usize + 1);
    let mut truth = Vec::with_capacity(n as usize + 1);
    for k in 0..=n {
        let t = (k * period_ns) as f64 * 1e-9;
        let s = tr.state(t);
        let mut gyro = s.angular_velocity + noise.gyro_bias;
        let mut accel = s.pose.rotation.inverse() * (s.acceleration + gravity()) + noise.accel_bias;
        if noise.gyro_noise_std > 0.0 {
            gyro += Vector3::from_fn(|_, _| gyro_n.sample(&mut rng));
        }
        if noise.accel_noise_std > 0.0 {
            accel += Vector3::from_fn(|_, _| accel_n.sample(&mut rng));
        }
        samples.push(ImuSample::new(t, gyro, accel));
        truth.push(GroundTruthState {
            timestamp: t,
            pose: s.pose,
            velocity: s.velocity,
            gyro_bias: noise.gyro_bias,
            accel_bias: noise.accel_bias,
        });
    }
    (samples, truth)
}

/// One track per landmark seen at least once; frame ids index `times`.
pub fn synth_observations(scene: &SimScene, times: &[f64], pixel_noise_std: f64, seed: u64) -> Vec<FeatureTrack> {
    let tr = scene.trajectory.build();
    let cams: Vec<Pose> = times.iter().map(|t| scene.camera_pose(&tr, *t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nrm = Normal::new(0.0, pixel_noise_std.max(f64::MIN_POSITIVE)).unwrap();
    scene
        .landmarks
        .iter()
        .enumerate()
        .filter_map(|(id, x)| {
            let mut obs = Vec::new();
            for (f, c) in cams.iter().enumerate() {
                let Ok(px) = scene.camera.project(&c.inverse_transform_point(x)) else { continue };
                if !scene.camera.contains(&px, 0.0) {
                    continue;
                }
                let px = if pixel_noise_std > 0.0 {
                    px + Vector2::new(nrm.sample(&mut rng), nrm.sample(&mut rng))
                } else {
                    px
                };
                obs.push(TrackObservation { frame: f, pixel: px, normalized: scene.camera.pixel_to_normalized(&px) });
            }
            (!obs.is_empty()).then(|| FeatureTrack::with_observations(id as u64, obs))
        })
        .collect()
}

/// A fragment together with the true states at its keyframes.
#[derive(Debug, Clone)]
pub struct SimFragment {
    pub fragment: Fragment,
    pub truth: Vec<GroundTruthState>,
}

/// Fragment with keyframes at `keyframe_times`, IMU samples covering them
/// and tracks seen in at least two keyframes.
pub fn simulate_fragment(scene: &SimScene, noise: &NoiseConfig, keyframe_times: &[f64]) -> SimFragment {
    let (samples, truth) = synth_imu(scene, noise, scene.trajectory.sample_rate);
    let (t0, t1) = (keyframe_times[0], keyframe_times[keyframe_times.len() - 1]);
    let eps = 1e-9;
    let lo = samples.iter().rposition(|s| s.timestamp <= t0 + eps).unwrap_or(0);
    let hi = samples.iter().position(|s| s.timestamp >= t1 - eps).unwrap_or(samples.len() - 1);
    let imu = samples[lo..=hi].to_vec();
    let tracks: Vec<FeatureTrack> =
        synth_observations(scene, keyframe_times, noise.pixel_noise_std, noise.seed.wrapping_add(0x5eed))
            .into_iter()
            .filter(|t| t.len() >= 2)
            .collect();
    let tr = scene.trajectory.build();
    let kf_truth = keyframe_times
        .iter()
        .map(|&t| {
            let s = tr.state(t);
            GroundTruthState {
                timestamp: t,
                pose: s.pose,
                velocity: s.velocity,
                gyro_bias: noise.gyro_bias,
                accel_bias: noise.accel_bias,
            }
        })
        .collect();
    let _ = truth;
    SimFragment {
        fragment: Fragment {
            keyframes: keyframe_times.to_vec(),
            tracks,
            imu,
            camera: scene.camera,
            extrinsic: scene.extrinsic,
        },
        truth: kf_truth,
    }
}

/// Full recording: IMU at the trajectory rate, ground truth at every IMU
/// sample and camera timestamps at `camera_rate`, plus tracks indexed by
/// camera frame.
pub fn simulate_sequence(
    scene: &SimScene,
    noise: &NoiseConfig,
    camera_rate: f64,
    name: &str,
) -> (Sequence, Vec<FeatureTrack>) {
    let (imu, ground_truth) = synth_imu(scene, noise, scene.trajectory.sample_rate);
    let period_ns = (1e9 / camera_rate).round() as i64;
    let n = (scene.trajectory.duration * 1e9 / period_ns as f64).floor() as i64;
    let camera_timestamps: Vec<f64> = (0..=n).map(|k| (k * period_ns) as f64 * 1e-9).collect();
    let tracks = synth_observations(scene, &camera_timestamps, noise.pixel_noise_std, noise.seed.wrapping_add(0x5eed));
    let calibration = Calibration {
        camera: scene.camera,
        extrinsic: scene.extrinsic,
        noise: ImuNoise {
            gyro_noise_density: noise.gyro_noise_std,
            accel_noise_density: noise.accel_noise_std,
            ..ImuNoise::default()
        },
        imu_rate: scene.trajectory.sample_rate,
        camera_rate,
    };
    let seq = Sequence { name: name.to_string(), time_origin_ns: 0, imu, ground_truth, camera_timestamps, calibration };
    (seq, tracks)
}
