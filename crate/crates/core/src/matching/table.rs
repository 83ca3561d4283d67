use nalgebra::Vector2;

use super::{Descriptor, FeatureTrack, TrackObservation};
use crate::geom::{triangulate, PinholeCamera, Pose};

/// Tracks of a frame sequence. A dropped track is frozen: it keeps its
/// observations and never receives new ones.
#[derive(Debug, Clone)]
pub struct TrackTable {
    pub camera: PinholeCamera,
    tracks: Vec<FeatureTrack>,
    alive: Vec<bool>,
    next_id: u64,
}

impl TrackTable {
    pub fn new(camera: PinholeCamera) -> Self {
        Self { camera, tracks: Vec::new(), alive: Vec::new(), next_id: 0 }
    }

    pub fn tracks(&self) -> &[FeatureTrack] {
        &self.tracks
    }

    pub fn into_tracks(self) -> Vec<FeatureTrack> {
        self.tracks
    }

    pub fn is_alive(&self, index: usize) -> bool {
        self.alive[index]
    }

    /// Indices of live tracks whose latest observation is in `frame`.
    pub fn live_in(&self, frame: usize) -> Vec<usize> {
        (0..self.tracks.len())
            .filter(|&i| self.alive[i] && self.tracks[i].last().is_some_and(|o| o.frame == frame))
            .collect()
    }

    pub fn live_count(&self) -> usize {
        self.alive.iter().filter(|a| **a).count()
    }

    pub(crate) fn observe(&mut self, index: usize, frame: usize, pixel: Vector2<f64>, descriptor: Option<Descriptor>) {
        let normalized = self.camera.pixel_to_normalized(&pixel);
        let t = &mut self.tracks[index];
        t.push(TrackObservation { frame, pixel, normalized });
        if descriptor.is_some() {
            t.descriptor = descriptor;
        }
    }

    pub(crate) fn drop_track(&mut self, index: usize) {
        self.alive[index] = false;
    }

    /// Marks every track not observed in `frame` as dropped.
    pub(crate) fn retire_stale(&mut self, frame: usize) {
        for (t, a) in self.tracks.iter().zip(self.alive.iter_mut()) {
            if *a && t.last().is_none_or(|o| o.frame != frame) {
                *a = false;
            }
        }
    }

    pub(crate) fn spawn(&mut self, frame: usize, pixel: Vector2<f64>, descriptor: Option<Descriptor>) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let mut t = FeatureTrack::new(id);
        t.descriptor = descriptor;
        self.tracks.push(t);
        self.alive.push(true);
        self.observe(self.tracks.len() - 1, frame, pixel, None);
        id
    }

    /// Triangulates live, untriangulated tracks from their first and latest
    /// observations. `poses[f]` is the camera-to-world pose of frame `f`.
    pub fn triangulate(&mut self, poses: &[Option<Pose>], min_ray_angle: f64) -> usize {
        let mut added = 0;
        for (t, alive) in self.tracks.iter_mut().zip(&self.alive) {
            if !alive || t.is_triangulated() || t.len() < 2 {
                continue;
            }
            let (a, b) = (t.first().unwrap(), t.last().unwrap());
            let (Some(Some(pa)), Some(Some(pb))) = (poses.get(a.frame), poses.get(b.frame)) else { continue };
            if let Some(x) = triangulate(pa, pb, &a.normalized, &b.normalized, min_ray_angle).good_point() {
                t.landmark = Some(x);
                added += 1;
            }
        }
        added
    }

    pub fn mean_track_length(&self) -> f64 {
        if self.tracks.is_empty() {
            return 0.0;
        }
        self.tracks.iter().map(|t| t.len() as f64).sum::<f64>() / self.tracks.len() as f64
    }
}
