use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use csv::{ReaderBuilder, Trim};
use nalgebra::{Matrix3, Matrix4, Quaternion, Rotation3, UnitQuaternion, Vector3};
use serde_yaml::Value;

use super::{Calibration, GroundTruthState, IoError, Sequence};
use crate::geom::{PinholeCamera, Pose};
use crate::imu::{ImuNoise, ImuSample};

const IMU_CSV: &str = "mav0/imu0/data.csv";
const CAM_CSV: &str = "mav0/cam0/data.csv";
const GT_CSV: &str = "mav0/state_groundtruth_estimate0/data.csv";
const IMU_YAML: &str = "mav0/imu0/sensor.yaml";
const CAM_YAML: &str = "mav0/cam0/sensor.yaml";

struct Row {
    line: u64,
    ns: i64,
    values: Vec<f64>,
}

fn require(dir: &Path, rel: &str) -> Result<PathBuf, IoError> {
    let p = dir.join(rel);
    if p.is_file() {
        Ok(p)
    } else {
        Err(IoError::MissingFile(p))
    }
}

/// Parses a nanosecond-stamped CSV, keeping `n_values` numeric columns after
/// the timestamp (`0` keeps only the timestamp and ignores the rest).
fn read_rows(path: &Path, n_values: usize) -> Result<Vec<Row>, IoError> {
    let mut rdr = ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => IoError::Io(io),
            _ => IoError::MissingFile(path.to_path_buf()),
        })?;
    let mut rows: Vec<Row> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| IoError::MalformedRow {
            file: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let malformed = || IoError::MalformedRow { file: path.to_path_buf(), line };
        if rec.len() < 1 + n_values || rec[0].is_empty() {
            return Err(malformed());
        }
        let ns: i64 = rec[0].parse().map_err(|_| malformed())?;
        let values =
            (1..=n_values).map(|i| rec[i].parse::<f64>().map_err(|_| malformed())).collect::<Result<_, _>>()?;
        if rows.last().is_some_and(|r| ns <= r.ns) {
            return Err(IoError::NonMonotoneTimestamps { file: path.to_path_buf(), line });
        }
        rows.push(Row { line, ns, values });
    }
    Ok(rows)
}

fn read_yaml(path: &Path) -> Result<Value, IoError> {
    let text = fs::read_to_string(path)?;
    // OpenCV-style files carry a directive line serde_yaml rejects
    let text = text.strip_prefix("%YAML:1.0").unwrap_or(&text);
    serde_yaml::from_str(text).map_err(|e| IoError::Metadata { file: path.to_path_buf(), message: e.to_string() })
}

fn yaml_list(v: &Value, key: &str, path: &Path) -> Result<Vec<f64>, IoError> {
    let err = || IoError::Metadata { file: path.to_path_buf(), message: format!("missing or invalid `{key}`") };
    let mut node = v.get(key).ok_or_else(err)?;
    if let Some(data) = node.get("data") {
        node = data;
    }
    node.as_sequence().ok_or_else(err)?.iter().map(|x| x.as_f64().ok_or_else(err)).collect()
}

fn yaml_f64(v: &Value, key: &str, path: &Path) -> Result<f64, IoError> {
    v.get(key)
        .and_then(Value::as_f64)
        .ok_or_else(|| IoError::Metadata { file: path.to_path_buf(), message: format!("missing or invalid `{key}`") })
}

fn pose_from_matrix(data: &[f64], path: &Path) -> Result<Pose, IoError> {
    if data.len() != 16 {
        return Err(IoError::Metadata { file: path.to_path_buf(), message: "T_BS needs 16 entries".into() });
    }
    let m = Matrix4::from_row_slice(data);
    let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into();
    let rotation = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix(&r));
    Ok(Pose::new(rotation, m.fixed_view::<3, 1>(0, 3).into()))
}

fn unit_quaternion(w: f64, x: f64, y: f64, z: f64) -> UnitQuaternion<f64> {
    let q = Quaternion::new(w, x, y, z);
    if (q.norm() - 1.0).abs() < 1e-12 {
        UnitQuaternion::new_unchecked(q)
    } else {
        UnitQuaternion::from_quaternion(q)
    }
}

/// Reads an EuRoC ASL sequence directory (the one containing `mav0`).
/// Times are stored relative to the earliest timestamp of any stream.
pub fn load_euroc(dir: &Path) -> Result<Sequence, IoError> {
    let imu_path = require(dir, IMU_CSV)?;
    let cam_path = require(dir, CAM_CSV)?;
    let gt_path = require(dir, GT_CSV)?;
    let imu_yaml = require(dir, IMU_YAML)?;
    let cam_yaml = require(dir, CAM_YAML)?;

    let imu_rows = read_rows(&imu_path, 6)?;
    let cam_rows = read_rows(&cam_path, 0)?;
    let gt_rows = read_rows(&gt_path, 16)?;
    let origin = [&imu_rows, &cam_rows, &gt_rows].iter().filter_map(|r| r.first().map(|r| r.ns)).min().unwrap_or(0);
    let secs = |ns: i64| (ns - origin) as f64 * 1e-9;

    let imu = imu_rows
        .iter()
        .map(|r| {
            let v = &r.values;
            ImuSample::new(secs(r.ns), Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
        })
        .collect();
    let camera_timestamps = cam_rows.iter().map(|r| secs(r.ns)).collect();
    let ground_truth = gt_rows
        .iter()
        .map(|r| {
            let v = &r.values;
            let q = unit_quaternion(v[3], v[4], v[5], v[6]);
            if !q.coords.iter().all(|c| c.is_finite()) {
                return Err(IoError::MalformedRow { file: gt_path.clone(), line: r.line });
            }
            Ok(GroundTruthState {
                timestamp: secs(r.ns),
                pose: Pose::new(q, Vector3::new(v[0], v[1], v[2])),
                velocity: Vector3::new(v[7], v[8], v[9]),
                gyro_bias: Vector3::new(v[10], v[11], v[12]),
                accel_bias: Vector3::new(v[13], v[14], v[15]),
            })
        })
        .collect::<Result<_, _>>()?;

    let iy = read_yaml(&imu_yaml)?;
    let cy = read_yaml(&cam_yaml)?;
    let k = yaml_list(&cy, "intrinsics", &cam_yaml)?;
    let res = yaml_list(&cy, "resolution", &cam_yaml)?;
    if k.len() != 4 || res.len() != 2 {
        return Err(IoError::Metadata {
            file: cam_yaml,
            message: "intrinsics needs 4 and resolution 2 entries".into(),
        });
    }
    let camera = PinholeCamera::new(k[0], k[1], k[2], k[3], res[0] as u32, res[1] as u32)
        .map_err(|e| IoError::Metadata { file: cam_yaml.clone(), message: e.to_string() })?;
    let body_cam = pose_from_matrix(&yaml_list(&cy, "T_BS", &cam_yaml)?, &cam_yaml)?;
    let body_imu = match iy.get("T_BS") {
        Some(_) => pose_from_matrix(&yaml_list(&iy, "T_BS", &imu_yaml)?, &imu_yaml)?,
        None => Pose::identity(),
    };
    let calibration = Calibration {
        camera,
        extrinsic: body_imu.inverse().compose(&body_cam),
        noise: ImuNoise {
            gyro_noise_density: yaml_f64(&iy, "gyroscope_noise_density", &imu_yaml)?,
            gyro_random_walk: yaml_f64(&iy, "gyroscope_random_walk", &imu_yaml)?,
            accel_noise_density: yaml_f64(&iy, "accelerometer_noise_density", &imu_yaml)?,
            accel_random_walk: yaml_f64(&iy, "accelerometer_random_walk", &imu_yaml)?,
        },
        imu_rate: yaml_f64(&iy, "rate_hz", &imu_yaml)?,
        camera_rate: yaml_f64(&cy, "rate_hz", &cam_yaml)?,
    };
    let name = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    Ok(Sequence { name, time_origin_ns: origin, imu, ground_truth, camera_timestamps, calibration })
}

fn matrix_yaml(p: &Pose) -> String {
    let r = p.rotation_matrix();
    let t = p.position;
    let rows: Vec<String> = (0..3)
        .map(|i| format!("{}, {}, {}, {}", r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]))
        .chain(std::iter::once("0.0, 0.0, 0.0, 1.0".to_string()))
        .collect();
    format!("T_BS:\n  cols: 4\n  rows: 4\n  data: [{}]\n", rows.join(",\n         "))
}

/// Writes `seq` in the EuRoC ASL layout under `dir`, with the IMU as body
/// frame. Samples reload bit-identically through [`load_euroc`].
pub fn write_euroc(seq: &Sequence, dir: &Path) -> Result<(), IoError> {
    for sub in ["mav0/imu0", "mav0/cam0", "mav0/state_groundtruth_estimate0"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    let mut s = String::from(
        "#timestamp [ns],w_RS_S_x [rad s^-1],w_RS_S_y [rad s^-1],w_RS_S_z [rad s^-1],\
         a_RS_S_x [m s^-2],a_RS_S_y [m s^-2],a_RS_S_z [m s^-2]\n",
    );
    for m in &seq.imu {
        let (g, a) = (m.gyro, m.accel);
        writeln!(s, "{},{},{},{},{},{},{}", seq.to_ns(m.timestamp), g.x, g.y, g.z, a.x, a.y, a.z).unwrap();
    }
    fs::write(dir.join(IMU_CSV), s)?;

    let mut s = String::from("#timestamp [ns],filename\n");
    for t in &seq.camera_timestamps {
        let ns = seq.to_ns(*t);
        writeln!(s, "{ns},{ns}.png").unwrap();
    }
    fs::write(dir.join(CAM_CSV), s)?;

    let mut s = String::from(
        "#timestamp, p_RS_R_x [m], p_RS_R_y [m], p_RS_R_z [m], q_RS_w [], q_RS_x [], q_RS_y [], q_RS_z [], \
         v_RS_R_x [m s^-1], v_RS_R_y [m s^-1], v_RS_R_z [m s^-1], b_w_RS_S_x [rad s^-1], b_w_RS_S_y [rad s^-1], \
         b_w_RS_S_z [rad s^-1], b_a_RS_S_x [m s^-2], b_a_RS_S_y [m s^-2], b_a_RS_S_z [m s^-2]\n",
    );
    for g in &seq.ground_truth {
        let (p, q, v, bg, ba) = (g.pose.position, g.pose.rotation.coords, g.velocity, g.gyro_bias, g.accel_bias);
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            seq.to_ns(g.timestamp),
            p.x,
            p.y,
            p.z,
            q.w,
            q.x,
            q.y,
            q.z,
            v.x,
            v.y,
            v.z,
            bg.x,
            bg.y,
            bg.z,
            ba.x,
            ba.y,
            ba.z
        )
        .unwrap();
    }
    fs::write(dir.join(GT_CSV), s)?;

    let c = &seq.calibration;
    let n = &c.noise;
    let imu_yaml = format!(
        "sensor_type: imu\nrate_hz: {}\n{}gyroscope_noise_density: {}\ngyroscope_random_walk: {}\n\
         accelerometer_noise_density: {}\naccelerometer_random_walk: {}\n",
        c.imu_rate,
        matrix_yaml(&Pose::identity()),
        n.gyro_noise_density,
        n.gyro_random_walk,
        n.accel_noise_density,
        n.accel_random_walk
    );
    fs::write(dir.join(IMU_YAML), imu_yaml)?;
    let k = &c.camera;
    let cam_yaml = format!(
        "sensor_type: camera\nrate_hz: {}\nresolution: [{}, {}]\ncamera_model: pinhole\n\
         intrinsics: [{}, {}, {}, {}]\ndistortion_model: radial-tangential\n\
         distortion_coefficients: [0.0, 0.0, 0.0, 0.0]\n{}",
        c.camera_rate,
        k.width,
        k.height,
        k.fx,
        k.fy,
        k.cx,
        k.cy,
        matrix_yaml(&c.extrinsic)
    );
    fs::write(dir.join(CAM_YAML), cam_yaml)?;
    Ok(())
}
