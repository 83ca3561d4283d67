use serde::{Deserialize, Serialize};

use super::{GroundTruthState, Sequence};
use crate::init::Fragment;
use crate::matching::{FeatureTrack, TrackObservation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FragmentConfig {
    /// Length of each disjoint fragment window, seconds.
    pub interval: f64,
    pub keyframe_spacing: f64,
    pub keyframe_count: usize,
    /// Largest offset between a keyframe slot and its image, seconds.
    pub association_tolerance: f64,
}

impl Default for FragmentConfig {
    fn default() -> Self {
        Self::for_keyframes(4)
    }
}

impl FragmentConfig {
    /// 0.6 s windows for 4 keyframes and 0.8 s for 5; longer keyframe sets
    /// get the smallest 0.2 s multiple above their span.
    pub fn for_keyframes(keyframe_count: usize) -> Self {
        let interval = match keyframe_count {
            0..=4 => 0.6,
            5 => 0.8,
            n => 0.2 * ((n as f64 * 0.1 / 0.2).floor() + 1.0),
        };
        Self { interval, keyframe_spacing: 0.1, keyframe_count, association_tolerance: 0.005 }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.keyframe_count < 4 {
            return Err(format!("keyframe_count {} below 4", self.keyframe_count));
        }
        if !(self.keyframe_spacing > 0.0 && self.interval > 0.0 && self.association_tolerance >= 0.0) {
            return Err("interval, spacing and tolerance must be positive".into());
        }
        if self.keyframe_count as f64 * self.keyframe_spacing > self.interval + 1e-9 {
            return Err(format!(
                "{} keyframes at {} s do not fit a {} s interval",
                self.keyframe_count, self.keyframe_spacing, self.interval
            ));
        }
        Ok(())
    }
}

/// A fragment with its place in the sequence and the true state at each
/// keyframe.
#[derive(Debug, Clone)]
pub struct LabeledFragment {
    pub sequence: String,
    /// Window index within the sequence; skipped windows leave gaps.
    pub index: usize,
    pub fragment: Fragment,
    pub truth: Vec<GroundTruthState>,
}

fn nearest(sorted: &[f64], t: f64) -> Option<usize> {
    let i = sorted.partition_point(|x| *x < t);
    [i.checked_sub(1), (i < sorted.len()).then_some(i)]
        .into_iter()
        .flatten()
        .min_by(|a, b| (sorted[*a] - t).abs().total_cmp(&(sorted[*b] - t).abs()))
}

/// Tiles the sequence into disjoint windows of `cfg.interval`, each with
/// keyframes every `cfg.keyframe_spacing` from its start. Windows lacking an
/// image near a keyframe slot, IMU coverage or ground truth are skipped;
/// the short tail is dropped. `tracks` index `seq.camera_timestamps`.
pub fn split_fragments(seq: &Sequence, tracks: &[FeatureTrack], cfg: &FragmentConfig) -> Vec<LabeledFragment> {
    let (Some(imu0), Some(imu1)) = (seq.imu.first(), seq.imu.last()) else { return Vec::new() };
    let cams = &seq.camera_timestamps;
    let (Some(&c0), Some(&c1)) = (cams.first(), cams.last()) else { return Vec::new() };
    let start = imu0.timestamp.max(c0);
    let end = imu1.timestamp.min(c1);
    let count = ((end - start) / cfg.interval + 1e-9).floor().max(0.0) as usize;

    // per camera frame, the (track, observation) pairs seen in it
    let mut by_frame: Vec<Vec<(usize, usize)>> = vec![Vec::new(); cams.len()];
    for (ti, t) in tracks.iter().enumerate() {
        for (oi, o) in t.observations.iter().enumerate() {
            if let Some(slot) = by_frame.get_mut(o.frame) {
                slot.push((ti, oi));
            }
        }
    }

    let mut out = Vec::new();
    'windows: for index in 0..count {
        let w0 = start + index as f64 * cfg.interval;
        let mut frames = Vec::with_capacity(cfg.keyframe_count);
        for k in 0..cfg.keyframe_count {
            let slot = w0 + k as f64 * cfg.keyframe_spacing;
            match nearest(cams, slot) {
                Some(f) if (cams[f] - slot).abs() <= cfg.association_tolerance + 1e-12 => frames.push(f),
                _ => continue 'windows,
            }
        }
        if !frames.windows(2).all(|w| w[1] > w[0]) {
            continue;
        }
        let keyframes: Vec<f64> = frames.iter().map(|&f| cams[f]).collect();
        let (t0, t1) = (keyframes[0], keyframes[keyframes.len() - 1]);
        let eps = 1e-9;
        let (Some(lo), Some(hi)) = (
            seq.imu.iter().rposition(|s| s.timestamp <= t0 + eps),
            seq.imu.iter().position(|s| s.timestamp >= t1 - eps),
        ) else {
            continue;
        };
        let Some(truth) = keyframes.iter().map(|&t| seq.ground_truth_at(t)).collect::<Option<Vec<_>>>() else {
            continue;
        };

        let mut local: Vec<FeatureTrack> = Vec::new();
        let mut slot_of: std::collections::HashMap<usize, usize> = Default::default();
        for (k, &f) in frames.iter().enumerate() {
            for &(ti, oi) in &by_frame[f] {
                let src = &tracks[ti];
                let li = *slot_of.entry(ti).or_insert_with(|| {
                    local.push(FeatureTrack { observations: Vec::new(), landmark: None, ..src.clone() });
                    local.len() - 1
                });
                local[li].push(TrackObservation { frame: k, ..src.observations[oi] });
            }
        }
        local.retain(|t| t.len() >= 2);

        out.push(LabeledFragment {
            sequence: seq.name.clone(),
            index,
            fragment: Fragment {
                keyframes,
                tracks: local,
                imu: seq.imu[lo..=hi].to_vec(),
                camera: seq.calibration.camera,
                extrinsic: seq.calibration.extrinsic,
            },
            truth,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_sequence, NoiseConfig, SimScene, TrajectoryModel};

    fn sequence(duration: f64) -> (Sequence, Vec<FeatureTrack>) {
        let scene = SimScene::generate(TrajectoryModel::random_spline(1, duration), 150, 1);
        simulate_sequence(&scene, &NoiseConfig::zero(), 20.0, "sim")
    }

    #[test]
    fn window_count_follows_interval() {
        let (seq, tracks) = sequence(60.0);
        let frags = split_fragments(&seq, &tracks, &FragmentConfig::for_keyframes(4));
        assert_eq!(frags.len(), 100);
        let frags5 = split_fragments(&seq, &tracks, &FragmentConfig::for_keyframes(5));
        assert_eq!(frags5.len(), 75);
        for w in frags.windows(2) {
            assert!(w[0].fragment.keyframes.last().unwrap() < &w[1].fragment.keyframes[0]);
            assert!(w[0].index < w[1].index);
        }
    }

    #[test]
    fn fragment_contents_consistent() {
        let (seq, tracks) = sequence(3.0);
        let cfg = FragmentConfig::for_keyframes(4);
        for lf in split_fragments(&seq, &tracks, &cfg) {
            let f = &lf.fragment;
            f.validate().unwrap();
            assert_eq!(f.keyframes.len(), 4);
            let span = f.keyframes[3] - f.keyframes[0];
            assert!((span - 0.3).abs() < 1e-9);
            for (k, g) in lf.truth.iter().enumerate() {
                assert_eq!(g.timestamp, f.keyframes[k]);
            }
            // observations keep their pixels and map to local keyframes
            for t in &f.tracks {
                let src = tracks.iter().find(|s| s.id == t.id).unwrap();
                for o in &t.observations {
                    let global = src.observations.iter().find(|s| s.pixel == o.pixel).unwrap();
                    assert_eq!(seq.camera_timestamps[global.frame], f.keyframes[o.frame]);
                }
            }
        }
    }

    #[test]
    fn short_sequence_yields_nothing() {
        let (seq, tracks) = sequence(0.5);
        assert!(split_fragments(&seq, &tracks, &FragmentConfig::for_keyframes(4)).is_empty());
    }

    #[test]
    fn missing_image_skips_window() {
        let (mut seq, tracks) = sequence(2.0);
        let cfg = FragmentConfig::for_keyframes(4);
        let before = split_fragments(&seq, &tracks, &cfg).len();
        // drop the image nearest 0.7 s, a keyframe slot of window 1
        let i = nearest(&seq.camera_timestamps, 0.7).unwrap();
        seq.camera_timestamps[i] += 0.02;
        let after = split_fragments(&seq, &tracks, &cfg);
        assert_eq!(after.len(), before - 1);
        assert!(after.iter().all(|f| f.index != 1));
    }

    #[test]
    fn config_validation() {
        assert!(FragmentConfig::for_keyframes(4).validate().is_ok());
        assert!(FragmentConfig::for_keyframes(10).validate().is_ok());
        let bad = FragmentConfig { interval: 0.3, ..FragmentConfig::for_keyframes(4) };
        assert!(bad.validate().is_err());
    }
}
