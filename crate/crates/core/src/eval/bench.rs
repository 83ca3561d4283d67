use std::path::Path;

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{ate, cdf, normalized_scale, scale_error};
use super::EvalError;
use crate::geom::{align_trajectories, AlignmentMode, Pose};
use crate::init::{initialize_fragment, AblationVariant, FailureStage, PipelineConfig};
use crate::io::{load_euroc, load_tracks, split_fragments, BenchmarkConfig, LabeledFragment};
use crate::sim::{simulate_sequence, NoiseConfig, SimScene, TrajectoryModel};

/// Accuracy of one successful initialization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FragmentMetrics {
    /// Estimated over true trajectory scale.
    pub scale: f64,
    pub ate_m: f64,
    pub gravity_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FragmentResult {
    pub sequence: String,
    pub fragment_index: usize,
    pub success: bool,
    pub failure_stage: Option<FailureStage>,
    /// Present iff `success`.
    pub metrics: Option<FragmentMetrics>,
    pub parallax_px: f64,
    pub used_static_path: bool,
    pub stage_times_ms: Vec<(FailureStage, f64)>,
}

impl FragmentResult {
    pub fn total_time_ms(&self) -> f64 {
        self.stage_times_ms.iter().map(|(_, t)| t).sum()
    }
}

/// Below this RMS spread, m, a trajectory counts as stationary for the
/// scale metric.
const STATIONARY_SPREAD: f64 = 1e-6;

fn spread(poses: &[Pose]) -> f64 {
    let n = poses.len() as f64;
    let mu = poses.iter().map(|p| p.position).sum::<Vector3<f64>>() / n;
    (poses.iter().map(|p| (p.position - mu).norm_squared()).sum::<f64>() / n).sqrt()
}

/// Scale, Sim(3)-aligned ATE and per-keyframe gravity error of an estimate
/// against the keyframe ground truth (body-to-world poses).
pub fn fragment_metrics(estimate: &[Pose], truth: &[Pose]) -> Result<FragmentMetrics, EvalError> {
    if estimate.len() != truth.len() {
        return Err(EvalError::LengthMismatch(estimate.len(), truth.len()));
    }
    let (se, st) = (spread(estimate), spread(truth));
    let scale = if st < STATIONARY_SPREAD && se < STATIONARY_SPREAD {
        1.0
    } else if st < STATIONARY_SPREAD {
        f64::INFINITY
    } else {
        let a = align_trajectories(estimate, truth, AlignmentMode::Similarity)
            .map_err(|e| EvalError::Alignment(e.to_string()))?;
        1.0 / a.scale
    };
    normalized_scale(scale)?;
    let ate_m = if st < STATIONARY_SPREAD {
        ate(estimate, truth, Some(AlignmentMode::YawAndPosition))?
    } else {
        ate(estimate, truth, Some(AlignmentMode::Similarity))?
    };
    let up = Vector3::z();
    let est: Vec<_> = estimate.iter().map(|p| p.rotation.inverse() * up).collect();
    let tru: Vec<_> = truth.iter().map(|p| p.rotation.inverse() * up).collect();
    let gravity_deg = super::metrics::gravity_error(&est, &tru)?;
    Ok(FragmentMetrics { scale, ate_m, gravity_deg })
}

pub fn evaluate_fragment(lf: &LabeledFragment, cfg: &PipelineConfig) -> FragmentResult {
    let report = initialize_fragment(&lf.fragment, cfg);
    let truth: Vec<Pose> = lf.truth.iter().map(|g| g.pose).collect();
    let mut result = FragmentResult {
        sequence: lf.sequence.clone(),
        fragment_index: lf.index,
        success: report.success,
        failure_stage: report.failure_stage,
        metrics: None,
        parallax_px: report.parallax_px,
        used_static_path: report.used_static_path,
        stage_times_ms: report.stage_times_ms.clone(),
    };
    if report.success {
        match fragment_metrics(&report.metric_poses, &truth) {
            Ok(m) => result.metrics = Some(m),
            Err(e) => {
                log::warn!("{} fragment {}: metrics unavailable: {e}", lf.sequence, lf.index);
                result.success = false;
            }
        }
    }
    result
}

/// Runs every fragment on `jobs` threads (0 = all cores); results keep the
/// input order.
pub fn run_benchmark(fragments: &[LabeledFragment], cfg: &PipelineConfig, jobs: usize) -> Vec<FragmentResult> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    pool.install(|| fragments.par_iter().map(|lf| evaluate_fragment(lf, cfg)).collect())
}

/// Aggregates over successful fragments of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSummary {
    pub label: String,
    pub fragments: usize,
    pub successes: usize,
    pub success_rate_pct: f64,
    pub mean_scale_error_pct: Option<f64>,
    pub mean_ate_m: Option<f64>,
    /// Root mean square of the per-fragment gravity errors.
    pub gravity_rmse_deg: Option<f64>,
    pub scale_error_cdf: Vec<(f64, f64)>,
    pub ate_cdf: Vec<(f64, f64)>,
    pub gravity_cdf: Vec<(f64, f64)>,
}

impl BenchmarkSummary {
    pub fn from_results(label: &str, results: &[FragmentResult]) -> Self {
        let ok: Vec<&FragmentMetrics> =
            results.iter().filter(|r| r.success).filter_map(|r| r.metrics.as_ref()).collect();
        let n = ok.len() as f64;
        let scale_errs: Vec<f64> =
            ok.iter().map(|m| 100.0 * (normalized_scale(m.scale).unwrap_or(0.0) - 1.0).abs()).collect();
        let ates: Vec<f64> = ok.iter().map(|m| m.ate_m).collect();
        let gravs: Vec<f64> = ok.iter().map(|m| m.gravity_deg).collect();
        let scales: Vec<f64> = ok.iter().map(|m| m.scale).collect();
        Self {
            label: label.to_string(),
            fragments: results.len(),
            successes: ok.len(),
            success_rate_pct: if results.is_empty() { 0.0 } else { 100.0 * n / results.len() as f64 },
            mean_scale_error_pct: scale_error(&scales).ok(),
            mean_ate_m: (!ok.is_empty()).then(|| ates.iter().sum::<f64>() / n),
            gravity_rmse_deg: (!ok.is_empty()).then(|| (gravs.iter().map(|g| g * g).sum::<f64>() / n).sqrt()),
            scale_error_cdf: cdf(&scale_errs),
            ate_cdf: cdf(&ates),
            gravity_cdf: cdf(&gravs),
        }
    }
}

/// Fragments from the configured dataset, or from simulated sequences when
/// no dataset is set.
pub fn load_fragments(cfg: &BenchmarkConfig) -> Result<Vec<LabeledFragment>, EvalError> {
    match &cfg.dataset_dir {
        Some(root) => dataset_fragments(root, cfg),
        None => Ok(simulated_fragments(cfg)),
    }
}

fn dataset_fragments(root: &Path, cfg: &BenchmarkConfig) -> Result<Vec<LabeledFragment>, EvalError> {
    let names: Vec<String> = if cfg.sequences.is_empty() {
        let mut v: Vec<String> = std::fs::read_dir(root)
            .map_err(|e| EvalError::Io(e.to_string()))?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().join("mav0").is_dir())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    } else {
        cfg.sequences.clone()
    };
    let tracks_file = cfg.tracks_file.as_deref().unwrap_or("tracks.csv");
    let mut out = Vec::new();
    for name in names {
        let dir = root.join(&name);
        let seq = load_euroc(&dir).map_err(|e| EvalError::Io(e.to_string()))?;
        let tracks = load_tracks(&dir.join(tracks_file), &seq).map_err(|e| EvalError::Io(e.to_string()))?;
        out.extend(split_fragments(&seq, &tracks, &cfg.fragments));
    }
    Ok(out)
}

/// Scene, noise and name of simulated sequence `i`.
pub fn simulated_scene(cfg: &BenchmarkConfig, i: usize) -> (SimScene, NoiseConfig, String) {
    let sim = &cfg.simulation;
    let seed = sim.seed.wrapping_add(i as u64);
    let scene = SimScene::generate(TrajectoryModel::random_spline(seed, sim.duration), sim.landmarks, seed);
    let noise = NoiseConfig { seed: sim.noise.seed.wrapping_add(seed), ..sim.noise };
    (scene, noise, format!("sim_{i:02}"))
}

fn simulated_fragments(cfg: &BenchmarkConfig) -> Vec<LabeledFragment> {
    (0..cfg.simulation.sequences)
        .into_par_iter()
        .map(|i| {
            let (scene, noise, name) = simulated_scene(cfg, i);
            let (seq, tracks) = simulate_sequence(&scene, &noise, cfg.simulation.camera_rate, &name);
            split_fragments(&seq, &tracks, &cfg.fragments)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Results and summary of every ablation variant, in table order.
pub fn ablation_sweep(
    fragments: &[LabeledFragment],
    cfg: &PipelineConfig,
    jobs: usize,
) -> Vec<(AblationVariant, Vec<FragmentResult>, BenchmarkSummary)> {
    AblationVariant::ALL
        .iter()
        .map(|&v| {
            let results = run_benchmark(fragments, &cfg.with_ablation(v), jobs);
            let summary = BenchmarkSummary::from_results(v.label(), &results);
            (v, results, summary)
        })
        .collect()
}
