use nalgebra::{Matrix3, Matrix4, UnitQuaternion, Vector3, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geom::{quat_from_rotvec, right_jacobian, Pose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectoryKind {
    /// Body at rest at the origin.
    Static,
    /// Independent sinusoids per axis for position (m) and attitude (rad).
    Sinusoid {
        amplitude: Vector3<f64>,
        frequency_hz: Vector3<f64>,
        rotation_amplitude: Vector3<f64>,
        rotation_frequency_hz: Vector3<f64>,
    },
    /// Horizontal circle at constant angular rate with the heading
    /// following the motion.
    Circle { radius: f64, angular_rate: f64 },
    /// Uniform cubic B-spline through random-walk control points.
    RandomSpline {
        seed: u64,
        /// Seconds between knots.
        knot_spacing: f64,
        /// Per-axis std of the control-point position increments, m.
        position_step: f64,
        /// Per-axis std of the control-point attitude increments, rad.
        rotation_step: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryModel {
    #[serde(flatten)]
    pub kind: TrajectoryKind,
    /// Seconds.
    pub duration: f64,
    /// IMU rate, Hz.
    pub sample_rate: f64,
}

impl TrajectoryModel {
    pub fn random_spline(seed: u64, duration: f64) -> Self {
        Self {
            kind: TrajectoryKind::RandomSpline { seed, knot_spacing: 0.5, position_step: 0.4, rotation_step: 0.15 },
            duration,
            sample_rate: 200.0,
        }
    }

    pub fn build(&self) -> Trajectory {
        let body = match &self.kind {
            TrajectoryKind::Static => Curve::Static,
            TrajectoryKind::Sinusoid { amplitude, frequency_hz, rotation_amplitude, rotation_frequency_hz } => {
                Curve::Sinusoid {
                    a: *amplitude,
                    w: frequency_hz * std::f64::consts::TAU,
                    ra: *rotation_amplitude,
                    rw: rotation_frequency_hz * std::f64::consts::TAU,
                }
            }
            TrajectoryKind::Circle { radius, angular_rate } => Curve::Circle { r: *radius, w: *angular_rate },
            TrajectoryKind::RandomSpline { seed, knot_spacing, position_step, rotation_step } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let n = (self.duration / knot_spacing).ceil() as usize + 3;
                let dp = Normal::new(0.0, position_step.max(0.0)).unwrap();
                let dr = Normal::new(0.0, rotation_step.max(0.0)).unwrap();
                let (mut p, mut r) = (Vector3::zeros(), Vector3::zeros());
                let mut pos = Vec::with_capacity(n);
                let mut rot = Vec::with_capacity(n);
                for _ in 0..n {
                    pos.push(p);
                    rot.push(r);
                    p += Vector3::from_fn(|_, _| dp.sample(&mut rng));
                    r += Vector3::from_fn(|_, _| dr.sample(&mut rng));
                }
                Curve::Spline { dt: *knot_spacing, pos, rot }
            }
        };
        Trajectory { curve: body, base: forward_looking_base(), duration: self.duration }
    }
}

/// Body attitude placing the default EuRoC camera's optical axis along
/// world +x with image rows pointing down.
fn forward_looking_base() -> UnitQuaternion<f64> {
    let r_wc = Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0);
    let r_wc = UnitQuaternion::from_matrix(&r_wc);
    r_wc * crate::sim::euroc_extrinsic().rotation.inverse()
}

/// True kinematic state at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicState {
    /// Body-to-world.
    pub pose: Pose,
    /// World frame, m/s.
    pub velocity: Vector3<f64>,
    /// World frame, m/s².
    pub acceleration: Vector3<f64>,
    /// Body frame, rad/s.
    pub angular_velocity: Vector3<f64>,
}

#[derive(Debug, Clone)]
enum Curve {
    Static,
    Sinusoid { a: Vector3<f64>, w: Vector3<f64>, ra: Vector3<f64>, rw: Vector3<f64> },
    Circle { r: f64, w: f64 },
    Spline { dt: f64, pos: Vec<Vector3<f64>>, rot: Vec<Vector3<f64>> },
}

/// Value and first two derivatives of a vector-valued curve.
type Jet = (Vector3<f64>, Vector3<f64>, Vector3<f64>);

fn spline_basis() -> Matrix4<f64> {
    Matrix4::new(1.0, 4.0, 1.0, 0.0, -3.0, 0.0, 3.0, 0.0, 3.0, -6.0, 3.0, 0.0, -1.0, 3.0, -3.0, 1.0) / 6.0
}

fn spline_jet(ctrl: &[Vector3<f64>], dt: f64, t: f64) -> Jet {
    let segments = ctrl.len() - 3;
    let s = (t / dt).max(0.0);
    let k = (s.floor() as usize).min(segments - 1);
    let u = s - k as f64;
    let m = spline_basis();
    let w0 = Vector4::new(1.0, u, u * u, u * u * u).transpose() * m;
    let w1 = Vector4::new(0.0, 1.0, 2.0 * u, 3.0 * u * u).transpose() * m / dt;
    let w2 = Vector4::new(0.0, 0.0, 2.0, 6.0 * u).transpose() * m / (dt * dt);
    let mut out = (Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
    for i in 0..4 {
        out.0 += ctrl[k + i] * w0[i];
        out.1 += ctrl[k + i] * w1[i];
        out.2 += ctrl[k + i] * w2[i];
    }
    out
}

fn sin_jet(a: &Vector3<f64>, w: &Vector3<f64>, t: f64) -> Jet {
    let v = Vector3::from_fn(|i, _| a[i] * (w[i] * t).sin());
    let d = Vector3::from_fn(|i, _| a[i] * w[i] * (w[i] * t).cos());
    let dd = Vector3::from_fn(|i, _| -a[i] * w[i] * w[i] * (w[i] * t).sin());
    (v, d, dd)
}

/// Evaluable trajectory. Attitude is `Exp(φ(t)) · base` with `φ` given in
/// the world frame.
#[derive(Debug, Clone)]
pub struct Trajectory {
    curve: Curve,
    base: UnitQuaternion<f64>,
    pub duration: f64,
}

impl Trajectory {
    fn jets(&self, t: f64) -> (Jet, Jet) {
        let zero = (Vector3::zeros(), Vector3::zeros(), Vector3::zeros());
        match &self.curve {
            Curve::Static => (zero, zero),
            Curve::Sinusoid { a, w, ra, rw } => (sin_jet(a, w, t), sin_jet(ra, rw, t)),
            Curve::Circle { r, w } => {
                let (c, s) = ((w * t).cos(), (w * t).sin());
                let p = (
                    Vector3::new(r * c, r * s, 0.0),
                    Vector3::new(-r * w * s, r * w * c, 0.0),
                    Vector3::new(-r * w * w * c, -r * w * w * s, 0.0),
                );
                // heading follows the tangent
                let phi = (
                    Vector3::new(0.0, 0.0, w * t + std::f64::consts::FRAC_PI_2),
                    Vector3::new(0.0, 0.0, *w),
                    Vector3::zeros(),
                );
                (p, phi)
            }
            Curve::Spline { dt, pos, rot } => (spline_jet(pos, *dt, t), spline_jet(rot, *dt, t)),
        }
    }

    pub fn state(&self, t: f64) -> KinematicState {
        let ((p, v, a), (phi, dphi, _)) = self.jets(t);
        let rotation = quat_from_rotvec(&phi) * self.base;
        // Ṙ = [Jl φ̇]× R with Jl(φ) = Jr(-φ), so ω_body = Rᵀ Jl φ̇
        let omega_world = right_jacobian(&-phi) * dphi;
        let angular_velocity = rotation.inverse() * omega_world;
        KinematicState { pose: Pose::new(rotation, p), velocity: v, acceleration: a, angular_velocity }
    }
}
