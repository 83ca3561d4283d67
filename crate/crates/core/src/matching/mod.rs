//! Hybrid feature matching over pluggable front-ends and the per-frame
//! track table.

mod hybrid;
mod ransac;
mod table;
mod track;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use hybrid::{
    hyb_match, knn_match, match_frame, match_with_2d_prior, match_with_3d_projection, track_sequence, MatchPrior,
    MatchStrategy,
};
pub use ransac::{fundamental_ransac, ransac_outlier_reject, sampson_distance_px, RansacOutcome};
pub use table::TrackTable;
pub use track::{Descriptor, FeatureTrack, TrackObservation};

/// Keypoints and their descriptors detected in one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameFeatures {
    pub frame: usize,
    pub keypoints: Vec<Vector2<f64>>,
    pub descriptors: Vec<Descriptor>,
}

impl FrameFeatures {
    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    /// Keeps the first `n` features.
    pub fn truncate(&mut self, n: usize) {
        self.keypoints.truncate(n);
        self.descriptors.truncate(n);
    }
}

/// Source of flow predictions and detections for a frame sequence.
pub trait FrontEnd {
    /// Predicts where `points` seen in `prev` lie in `cur`; `None` where
    /// tracking was lost.
    fn flow(&mut self, prev: usize, cur: usize, points: &[Vector2<f64>]) -> Vec<Option<Vector2<f64>>>;

    fn detect_and_describe(&mut self, cur: usize) -> FrameFeatures;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MatchKind {
    Projection3D,
    DescriptorWith2DPrior,
    FlowFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MatchOutcome {
    Matched { matched_by: MatchKind, location: Vector2<f64> },
    Dropped,
}

impl MatchOutcome {
    pub fn location(&self) -> Option<Vector2<f64>> {
        match self {
            MatchOutcome::Matched { location, .. } => Some(*location),
            MatchOutcome::Dropped => None,
        }
    }
}

/// Per-track results for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchSet {
    pub frame: usize,
    /// One entry per track that was live before this frame.
    pub outcomes: Vec<(u64, MatchOutcome)>,
    pub new_tracks: Vec<u64>,
    /// Matches removed by the epipolar check.
    pub rejected_by_ransac: usize,
    /// Too few matches to fit a model; all were retained.
    pub too_few_matches: bool,
}

impl MatchSet {
    pub fn count(&self, kind: MatchKind) -> usize {
        self.outcomes
            .iter()
            .filter(|(_, o)| matches!(o, MatchOutcome::Matched { matched_by, .. } if *matched_by == kind))
            .count()
    }

    pub fn dropped(&self) -> usize {
        self.outcomes.iter().filter(|(_, o)| *o == MatchOutcome::Dropped).count()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("landmark projects outside the image")]
    ProjectionOutOfImage,
    #[error("flow lost the track and no descriptor matched")]
    FlowLost,
    #[error("no descriptor passed the search window and ratio test")]
    NoDescriptorMatch,
    #[error("only {0} matches, too few to fit an epipolar model")]
    TooFewMatches(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub max_features: usize,
    /// Descriptor search radius around a projection or flow prior, pixels.
    pub search_radius_px: f64,
    pub ratio: f64,
    /// Hamming distance above which a best match is rejected outright.
    pub max_hamming: u32,
    pub min_tracks: usize,
    /// Minimum distance of a spawned track from live tracks, pixels.
    pub spawn_separation_px: f64,
    /// Sampson inlier threshold of the epipolar check, pixels.
    pub ransac_threshold_px: f64,
    pub ransac_iterations: usize,
    /// Search radius around the previous location for descriptor-only
    /// matching, which has no flow prior, pixels.
    pub descriptor_only_radius_px: f64,
    pub seed: u64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            max_features: 150,
            search_radius_px: 10.0,
            ratio: 0.7,
            max_hamming: 64,
            min_tracks: 150,
            spawn_separation_px: 20.0,
            ransac_threshold_px: 1.5,
            ransac_iterations: 200,
            descriptor_only_radius_px: 30.0,
            seed: 0,
        }
    }
}
