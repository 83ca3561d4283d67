use nalgebra::{Matrix2, Vector2, Vector3};

use super::Pose;

/// Outcome classification for a two-ray triangulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RayQuality {
    Good,
    /// Rays closer to parallel than the configured minimum angle.
    DegenerateRays,
    /// The midpoint lies behind one of the cameras.
    BehindCamera,
}

#[derive(Debug, Clone, Copy)]
pub struct Triangulation {
    /// Midpoint in world coordinates; `None` only for exactly parallel rays.
    pub point: Option<Vector3<f64>>,
    /// Angle between the two viewing rays, radians.
    pub ray_angle: f64,
    pub quality: RayQuality,
}

impl Triangulation {
    pub fn is_good(&self) -> bool {
        self.quality == RayQuality::Good
    }

    pub fn good_point(&self) -> Option<Vector3<f64>> {
        if self.is_good() {
            self.point
        } else {
            None
        }
    }
}

/// Midpoint triangulation of two normalized observations taken from two
/// camera-to-world poses.
pub fn triangulate(
    pose_i: &Pose,
    pose_j: &Pose,
    obs_i: &Vector2<f64>,
    obs_j: &Vector2<f64>,
    min_ray_angle: f64,
) -> Triangulation {
    let di = pose_i.rotation * Vector3::new(obs_i.x, obs_i.y, 1.0);
    let dj = pose_j.rotation * Vector3::new(obs_j.x, obs_j.y, 1.0);
    let ray_angle = di.angle(&dj);
    let ci = pose_i.position;
    let cj = pose_j.position;

    // minimise |ci + a di - cj - b dj|^2 over (a, b)
    let a = Matrix2::new(di.dot(&di), -di.dot(&dj), di.dot(&dj), -dj.dot(&dj));
    let w = cj - ci;
    let rhs = Vector2::new(di.dot(&w), dj.dot(&w));
    let point = a.try_inverse().and_then(|inv| {
        let s = inv * rhs;
        let p = 0.5 * ((ci + s.x * di) + (cj + s.y * dj));
        p.iter().all(|v| v.is_finite()).then_some(p)
    });

    let quality = match point {
        _ if ray_angle < min_ray_angle => RayQuality::DegenerateRays,
        None => RayQuality::DegenerateRays,
        Some(p) => {
            let zi = pose_i.inverse_transform_point(&p).z;
            let zj = pose_j.inverse_transform_point(&p).z;
            if zi > 0.0 && zj > 0.0 {
                RayQuality::Good
            } else {
                RayQuality::BehindCamera
            }
        }
    };
    Triangulation { point, ray_angle, quality }
}
