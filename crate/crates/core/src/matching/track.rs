use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// 256-bit binary descriptor compared by Hamming distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Descriptor(pub [u64; 4]);

impl Descriptor {
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| (a ^ b).count_ones()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackObservation {
    pub frame: usize,
    pub pixel: Vector2<f64>,
    /// Undistorted normalized image coordinates.
    pub normalized: Vector2<f64>,
}

/// One landmark's observations across frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTrack {
    pub id: u64,
    /// Sorted by strictly increasing frame id.
    pub observations: Vec<TrackObservation>,
    /// Descriptor of the latest descriptor-confirmed observation.
    pub descriptor: Option<Descriptor>,
    /// World point once the track has been triangulated.
    pub landmark: Option<Vector3<f64>>,
}

impl FeatureTrack {
    pub fn new(id: u64) -> Self {
        Self { id, observations: Vec::new(), descriptor: None, landmark: None }
    }

    pub fn with_observations(id: u64, observations: Vec<TrackObservation>) -> Self {
        debug_assert!(observations.windows(2).all(|w| w[0].frame < w[1].frame));
        Self { id, observations, descriptor: None, landmark: None }
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn is_triangulated(&self) -> bool {
        self.landmark.is_some()
    }

    pub fn first(&self) -> Option<&TrackObservation> {
        self.observations.first()
    }

    pub fn last(&self) -> Option<&TrackObservation> {
        self.observations.last()
    }

    pub fn observation_in(&self, frame: usize) -> Option<&TrackObservation> {
        self.observations.binary_search_by_key(&frame, |o| o.frame).ok().map(|i| &self.observations[i])
    }

    /// Appends an observation; panics if `frame` does not come after the
    /// latest observation.
    pub fn push(&mut self, obs: TrackObservation) {
        if let Some(last) = self.observations.last() {
            assert!(obs.frame > last.frame, "track {} observations must be in increasing frame order", self.id);
        }
        self.observations.push(obs);
    }
}
