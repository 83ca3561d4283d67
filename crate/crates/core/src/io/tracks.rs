//! Track files: one CSV row `track_id,frame_timestamp_ns,u_px,v_px` per
//! observation, `#` comment lines allowed. Pixels are undistorted.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use csv::{ReaderBuilder, Trim};
use nalgebra::Vector2;

use super::{IoError, Sequence};
use crate::matching::{FeatureTrack, TrackObservation};

/// Loads tracks whose frame ids index `seq.camera_timestamps`.
pub fn load_tracks(path: &Path, seq: &Sequence) -> Result<Vec<FeatureTrack>, IoError> {
    if !path.is_file() {
        return Err(IoError::MissingFile(path.to_path_buf()));
    }
    let frames: HashMap<i64, usize> =
        seq.camera_timestamps.iter().enumerate().map(|(i, t)| (seq.to_ns(*t), i)).collect();
    let camera = &seq.calibration.camera;
    let mut rdr = ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(Trim::All)
        .from_path(path)
        .map_err(|_| IoError::MissingFile(path.to_path_buf()))?;
    let mut grouped: BTreeMap<u64, BTreeMap<usize, Vector2<f64>>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::MalformedRow {
            file: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let malformed = || IoError::MalformedRow { file: path.to_path_buf(), line };
        if rec.len() != 4 {
            return Err(malformed());
        }
        let id: u64 = rec[0].parse().map_err(|_| malformed())?;
        let ns: i64 = rec[1].parse().map_err(|_| malformed())?;
        let u: f64 = rec[2].parse().map_err(|_| malformed())?;
        let v: f64 = rec[3].parse().map_err(|_| malformed())?;
        let frame = *frames.get(&ns).ok_or(IoError::UnknownFrameTimestamp(ns))?;
        if grouped.entry(id).or_default().insert(frame, Vector2::new(u, v)).is_some() {
            return Err(malformed());
        }
    }
    Ok(grouped
        .into_iter()
        .map(|(id, obs)| {
            let observations = obs
                .into_iter()
                .map(|(frame, pixel)| TrackObservation { frame, pixel, normalized: camera.pixel_to_normalized(&pixel) })
                .collect();
            FeatureTrack::with_observations(id, observations)
        })
        .collect())
}

/// Writes tracks whose frame ids index `seq.camera_timestamps`.
pub fn write_tracks(path: &Path, seq: &Sequence, tracks: &[FeatureTrack]) -> Result<(), IoError> {
    let mut s = String::from("#track_id,frame_timestamp_ns,u_px,v_px\n");
    for t in tracks {
        for o in &t.observations {
            let ns = seq.to_ns(seq.camera_timestamps[o.frame]);
            writeln!(s, "{},{},{},{}", t.id, ns, o.pixel.x, o.pixel.y).unwrap();
        }
    }
    fs::write(path, s)?;
    Ok(())
}
