//! Relative translation direction from correspondences when the relative
//! rotation is known from the gyroscope.

use nalgebra::{Matrix2, Matrix3, UnitQuaternion, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RansacConfig;
use super::types::InitError;
use crate::geom::skew;

/// Normalized observation of the same point in frames `i` and `j`.
pub type Correspondence = (Vector2<f64>, Vector2<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct TwoPointResult {
    /// Unit position of camera j in camera i's frame.
    pub translation: Vector3<f64>,
    pub inliers: Vec<bool>,
    pub iterations: usize,
}

impl TwoPointResult {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|b| **b).count()
    }
}

fn homog(v: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.y, 1.0)
}

/// Coplanarity normal: `t · n = 0` for the true translation.
fn constraint(c: &Correspondence, r_ij: &Matrix3<f64>) -> Vector3<f64> {
    (r_ij * homog(&c.1)).cross(&homog(&c.0))
}

/// Distance from `x_j` to its epipolar line in image j, normalized units.
#[cfg(test)]
fn epipolar_distance(c: &Correspondence, r_ij: &Matrix3<f64>, t: &Vector3<f64>) -> f64 {
    let line = -(r_ij.transpose() * t.cross(&homog(&c.0)));
    let den = (line.x * line.x + line.y * line.y).sqrt();
    if den < 1e-15 {
        return f64::INFINITY;
    }
    line.dot(&homog(&c.1)).abs() / den
}

/// Sampson distance of the epipolar constraint, normalized units; accounts
/// for noise in both images.
pub(crate) fn sampson_distance(c: &Correspondence, r_ij: &Matrix3<f64>, t: &Vector3<f64>) -> f64 {
    let e = skew(t) * r_ij;
    let (a, b) = (homog(&c.0), homog(&c.1));
    let eb = e * b;
    let eta = e.transpose() * a;
    let den = (eb.x * eb.x + eb.y * eb.y + eta.x * eta.x + eta.y * eta.y).sqrt();
    if den < 1e-15 {
        return f64::INFINITY;
    }
    a.dot(&eb).abs() / den
}

/// Depths `(λ_i, λ_j)` with `λ_i x_i ≈ λ_j R x_j + t`.
pub(crate) fn ray_depths(c: &Correspondence, r_ij: &Matrix3<f64>, t: &Vector3<f64>) -> Option<(f64, f64)> {
    let a = homog(&c.0);
    let b = r_ij * homog(&c.1);
    let m = Matrix2::new(a.dot(&a), -a.dot(&b), a.dot(&b), -b.dot(&b));
    let s = m.try_inverse()? * Vector2::new(a.dot(t), b.dot(t));
    Some((s.x, s.y))
}

/// Refinement gate as a multiple of the inlier threshold.
const REFINE_GATE: f64 = 3.0;

fn adaptive_iterations(inlier_ratio: f64, confidence: f64, sample_size: i32, cap: usize) -> usize {
    if inlier_ratio <= 0.0 {
        return cap;
    }
    let p_good = inlier_ratio.powi(sample_size);
    if p_good >= 1.0 {
        return 1;
    }
    let n = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    (n.ceil().max(1.0) as usize).min(cap)
}

/// Robust translation direction with the rotation `r_ij` (camera j to camera
/// i) held fixed.
pub fn two_point_ransac(
    correspondences: &[Correspondence],
    r_ij: &UnitQuaternion<f64>,
    focal_px: f64,
    cfg: &RansacConfig,
) -> Result<TwoPointResult, InitError> {
    let n = correspondences.len();
    if n < 2 {
        return Err(InitError::TooFewCorrespondences(n));
    }
    let r = r_ij.to_rotation_matrix().into_inner();

    // rotation-compensated parallax decides whether a baseline exists
    let mut parallax: Vec<f64> = correspondences
        .iter()
        .map(|c| {
            let p = r * homog(&c.1);
            (Vector2::new(p.x / p.z, p.y / p.z) - c.0).norm() * focal_px
        })
        .collect();
    parallax.sort_by(f64::total_cmp);
    let median = parallax[n / 2];
    if !(median >= cfg.min_parallax_px) {
        return Err(InitError::DegenerateMotion(median));
    }

    let thr = cfg.threshold_px / focal_px;
    let normals: Vec<Vector3<f64>> = correspondences.iter().map(|c| constraint(c, &r)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Vec<bool>)> = None;
    let mut needed = cfg.max_iterations;
    let mut it = 0;
    while it < needed.min(cfg.max_iterations) {
        it += 1;
        let idx = sample(&mut rng, n, 2);
        let t = normals[idx.index(0)].cross(&normals[idx.index(1)]);
        if t.norm() < 1e-12 {
            continue;
        }
        let t = t.normalize();
        let mut mask: Vec<bool> = correspondences.iter().map(|c| sampson_distance(c, &r, &t) < thr).collect();
        let mut count = mask.iter().filter(|b| **b).count();
        if best.as_ref().map_or(true, |b| count > b.0) {
            // local optimization: a refined hypothesis usually gathers more support
            if count >= 2 {
                let refined = refine_sampson(correspondences, &mask, &r, &refine_linear(&normals, &mask));
                let m2: Vec<bool> = correspondences.iter().map(|c| sampson_distance(c, &r, &refined) < thr).collect();
                let c2 = m2.iter().filter(|b| **b).count();
                if c2 > count {
                    (mask, count) = (m2, c2);
                }
            }
            needed = adaptive_iterations(count as f64 / n as f64, cfg.confidence, 2, cfg.max_iterations);
            best = Some((count, mask));
        }
    }
    let Some((count, mut mask)) = best else {
        return Err(InitError::NoConsensus(0.0));
    };
    if count < 2 {
        return Err(InitError::NoConsensus(count as f64 / n as f64));
    }

    // linear estimate on inliers, then Gauss-Newton on the Sampson distances
    // over a wider gate so the fit is not biased by truncating the noise tail
    let mut t = refine_linear(&normals, &mask);
    for _ in 0..2 {
        let gate: Vec<bool> = correspondences.iter().map(|c| sampson_distance(c, &r, &t) < REFINE_GATE * thr).collect();
        t = refine_sampson(correspondences, &gate, &r, &t);
    }
    mask = correspondences.iter().map(|c| sampson_distance(c, &r, &t) < thr).collect();
    let ratio = mask.iter().filter(|b| **b).count() as f64 / n as f64;
    if ratio < cfg.min_inlier_ratio {
        return Err(InitError::NoConsensus(ratio));
    }

    // sign from cheirality
    let mut votes = 0i64;
    for (c, _) in correspondences.iter().zip(&mask).filter(|(_, m)| **m) {
        if let Some((a, b)) = ray_depths(c, &r, &t) {
            if a > 0.0 && b > 0.0 {
                votes += 1;
            } else if a < 0.0 && b < 0.0 {
                votes -= 1;
            }
        }
    }
    if votes < 0 {
        t = -t;
    }
    Ok(TwoPointResult { translation: t, inliers: mask, iterations: it })
}

fn refine_linear(normals: &[Vector3<f64>], mask: &[bool]) -> Vector3<f64> {
    let mut m = Matrix3::zeros();
    for (nrm, _) in normals.iter().zip(mask).filter(|(_, m)| **m) {
        m += nrm * nrm.transpose();
    }
    let eig = m.symmetric_eigen();
    eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned().normalize()
}

fn signed_sampson(c: &Correspondence, r_ij: &Matrix3<f64>, t: &Vector3<f64>) -> f64 {
    let e = skew(t) * r_ij;
    let (a, b) = (homog(&c.0), homog(&c.1));
    let eb = e * b;
    let eta = e.transpose() * a;
    a.dot(&eb) / (eb.x * eb.x + eb.y * eb.y + eta.x * eta.x + eta.y * eta.y).sqrt().max(1e-15)
}

/// Minimizes the summed squared Sampson distance over unit translations.
fn refine_sampson(corr: &[Correspondence], mask: &[bool], r_ij: &Matrix3<f64>, t0: &Vector3<f64>) -> Vector3<f64> {
    let cost = |t: &Vector3<f64>| -> f64 {
        corr.iter().zip(mask).filter(|(_, m)| **m).map(|(c, _)| signed_sampson(c, r_ij, t).powi(2)).sum()
    };
    let mut t = t0.normalize();
    let mut current = cost(&t);
    let h = 1e-7;
    for _ in 0..10 {
        let helper = if t.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let u = t.cross(&helper).normalize();
        let v = t.cross(&u);
        let mut jtj = Matrix2::zeros();
        let mut jtr = Vector2::zeros();
        for (c, _) in corr.iter().zip(mask).filter(|(_, m)| **m) {
            let r0 = signed_sampson(c, r_ij, &t);
            let ju = (signed_sampson(c, r_ij, &(t + u * h)) - signed_sampson(c, r_ij, &(t - u * h))) / (2.0 * h);
            let jv = (signed_sampson(c, r_ij, &(t + v * h)) - signed_sampson(c, r_ij, &(t - v * h))) / (2.0 * h);
            let j = Vector2::new(ju, jv);
            jtj += j * j.transpose();
            jtr += j * r0;
        }
        let Some(step) = jtj.try_inverse().map(|inv| -(inv * jtr)) else { break };
        let candidate = (t + u * step.x + v * step.y).normalize();
        let c = cost(&candidate);
        if !(c < current) {
            break;
        }
        let done = (current - c) <= 1e-12 * current;
        t = candidate;
        current = c;
        if done {
            break;
        }
    }
    t
}
