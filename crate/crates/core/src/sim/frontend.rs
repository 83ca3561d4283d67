use std::collections::HashMap;

use nalgebra::{Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SimScene;
use crate::geom::{PinholeCamera, Pose};
use crate::matching::{Descriptor, FrameFeatures, FrontEnd};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontEndConfig {
    /// Flow bias added per tracked frame along a fixed per-landmark
    /// direction, pixels.
    pub flow_drift_px: f64,
    pub flow_noise_px: f64,
    /// Probability that a detection carries a random descriptor.
    pub descriptor_fail_prob: f64,
    pub pixel_noise_std: f64,
    pub max_features: usize,
    pub seed: u64,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        Self {
            flow_drift_px: 0.0,
            flow_noise_px: 0.0,
            descriptor_fail_prob: 0.0,
            pixel_noise_std: 0.0,
            max_features: 150,
            seed: 0,
        }
    }
}

/// Front-end driven by the true scene. Every pixel it hands out is
/// remembered with its landmark, so flow continues the same landmark the
/// way a patch tracker would.
#[derive(Debug, Clone)]
pub struct SimFrontEnd {
    camera: PinholeCamera,
    poses: Vec<Pose>,
    landmarks: Vec<Vector3<f64>>,
    cfg: FrontEndConfig,
    rng: ChaCha8Rng,
    descriptors: Vec<Descriptor>,
    response: Vec<f64>,
    drift_dir: Vec<Vector2<f64>>,
    emitted: HashMap<(usize, u64, u64), usize>,
}

fn key(frame: usize, p: &Vector2<f64>) -> (usize, u64, u64) {
    (frame, p.x.to_bits(), p.y.to_bits())
}

fn random_descriptor(rng: &mut ChaCha8Rng) -> Descriptor {
    Descriptor([rng.gen(), rng.gen(), rng.gen(), rng.gen()])
}

/// Front-end over camera frames at `frame_times` along the scene trajectory.
pub fn synth_frontends(scene: &SimScene, frame_times: &[f64], cfg: &FrontEndConfig) -> SimFrontEnd {
    let tr = scene.trajectory.build();
    let poses = frame_times.iter().map(|t| scene.camera_pose(&tr, *t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = scene.landmarks.len();
    let descriptors = (0..n).map(|_| random_descriptor(&mut rng)).collect();
    let response = (0..n).map(|_| rng.gen::<f64>()).collect();
    let drift_dir = (0..n)
        .map(|_| {
            let a = rng.gen_range(0.0..std::f64::consts::TAU);
            Vector2::new(a.cos(), a.sin())
        })
        .collect();
    SimFrontEnd {
        camera: scene.camera,
        poses,
        landmarks: scene.landmarks.clone(),
        cfg: *cfg,
        rng,
        descriptors,
        response,
        drift_dir,
        emitted: HashMap::new(),
    }
}

impl SimFrontEnd {
    /// True camera-to-world pose of every frame.
    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn camera(&self) -> &PinholeCamera {
        &self.camera
    }

    pub fn frame_count(&self) -> usize {
        self.poses.len()
    }

    /// Landmark behind a pixel this front-end produced for `frame`.
    pub fn landmark_of(&self, frame: usize, pixel: &Vector2<f64>) -> Option<usize> {
        self.emitted.get(&key(frame, pixel)).copied()
    }

    pub fn landmark(&self, id: usize) -> Vector3<f64> {
        self.landmarks[id]
    }

    fn projection(&self, frame: usize, l: usize) -> Option<Vector2<f64>> {
        let px = self.camera.project(&self.poses[frame].inverse_transform_point(&self.landmarks[l])).ok()?;
        self.camera.contains(&px, 0.0).then_some(px)
    }

    fn gaussian(&mut self, std: f64) -> Vector2<f64> {
        if std <= 0.0 {
            return Vector2::zeros();
        }
        let n = Normal::new(0.0, std).unwrap();
        Vector2::new(n.sample(&mut self.rng), n.sample(&mut self.rng))
    }
}

impl FrontEnd for SimFrontEnd {
    fn flow(&mut self, prev: usize, cur: usize, points: &[Vector2<f64>]) -> Vec<Option<Vector2<f64>>> {
        points
            .iter()
            .map(|p| {
                let l = self.landmark_of(prev, p)?;
                let (from, to) = (self.projection(prev, l)?, self.projection(cur, l)?);
                let steps = cur.abs_diff(prev) as f64;
                let noise = self.gaussian(self.cfg.flow_noise_px);
                let out = to + (p - from) + self.drift_dir[l] * self.cfg.flow_drift_px * steps + noise;
                if !self.camera.contains(&out, 0.0) {
                    return None;
                }
                self.emitted.insert(key(cur, &out), l);
                Some(out)
            })
            .collect()
    }

    fn detect_and_describe(&mut self, cur: usize) -> FrameFeatures {
        let mut visible: Vec<(usize, Vector2<f64>)> =
            (0..self.landmarks.len()).filter_map(|l| self.projection(cur, l).map(|px| (l, px))).collect();
        visible.sort_by(|a, b| self.response[b.0].total_cmp(&self.response[a.0]));
        visible.truncate(self.cfg.max_features);
        let mut features = FrameFeatures { frame: cur, ..FrameFeatures::default() };
        for (l, px) in visible {
            let kp = px + self.gaussian(self.cfg.pixel_noise_std);
            let d = if self.rng.gen::<f64>() < self.cfg.descriptor_fail_prob {
                random_descriptor(&mut self.rng)
            } else {
                self.descriptors[l]
            };
            self.emitted.insert(key(cur, &kp), l);
            features.keypoints.push(kp);
            features.descriptors.push(d);
        }
        features
    }
}
