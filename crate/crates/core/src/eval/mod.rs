//! Accuracy metrics, the benchmark runner and its result files.

mod bench;
mod metrics;
pub mod report;

use thiserror::Error;

pub use bench::{
    ablation_sweep, evaluate_fragment, fragment_metrics, load_fragments, run_benchmark, simulated_scene,
    BenchmarkSummary, FragmentMetrics, FragmentResult,
};
pub use metrics::{
    ate, cdf, epipolar_error, fundamental_from_poses, gravity_error, median, median_by_length, normalized_scale,
    scale_error, track_epipolar_errors,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("scale {0} is not positive")]
    NonPositiveScale(f64),
    #[error("vector norm {0} is not unit")]
    NonUnitVector(f64),
    #[error("zero baseline between the two views")]
    ZeroBaseline,
    #[error("no samples")]
    Empty,
    #[error("alignment failed: {0}")]
    Alignment(String),
    #[error("{0}")]
    Io(String),
}
