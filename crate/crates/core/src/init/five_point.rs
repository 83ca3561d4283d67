//! Visual-only relative pose from the minimal five-point essential-matrix
//! solver (action-matrix formulation), used as the ablation baseline for
//! the gyro-aided two-point solver.

use nalgebra::{DMatrix, Matrix3, SMatrix, UnitQuaternion, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RansacConfig;
use super::two_point::{ray_depths, Correspondence};
use super::types::InitError;

/// Monomials up to degree 3 in (x, y, z): the ten cubic terms first, then
/// the action-matrix basis `x², xy, xz, y², yz, z², x, y, z, 1`.
const MONOMIALS: [(u8, u8, u8); 20] = [
    (3, 0, 0),
    (2, 1, 0),
    (2, 0, 1),
    (1, 2, 0),
    (1, 1, 1),
    (1, 0, 2),
    (0, 3, 0),
    (0, 2, 1),
    (0, 1, 2),
    (0, 0, 3),
    (2, 0, 0),
    (1, 1, 0),
    (1, 0, 1),
    (0, 2, 0),
    (0, 1, 1),
    (0, 0, 2),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
    (0, 0, 0),
];

#[derive(Clone, Copy)]
struct Poly([f64; 20]);

fn monomial_index(e: (u8, u8, u8)) -> usize {
    MONOMIALS.iter().position(|m| *m == e).expect("degree at most 3")
}

impl Poly {
    fn zero() -> Self {
        Poly([0.0; 20])
    }

    fn linear(x: f64, y: f64, z: f64, w: f64) -> Self {
        let mut p = Poly::zero();
        p.0[16] = x;
        p.0[17] = y;
        p.0[18] = z;
        p.0[19] = w;
        p
    }

    fn mul(&self, o: &Poly) -> Poly {
        let mut out = Poly::zero();
        for (i, a) in self.0.iter().enumerate().filter(|(_, a)| **a != 0.0) {
            for (j, b) in o.0.iter().enumerate().filter(|(_, b)| **b != 0.0) {
                let (ei, ej) = (MONOMIALS[i], MONOMIALS[j]);
                out.0[monomial_index((ei.0 + ej.0, ei.1 + ej.1, ei.2 + ej.2))] += a * b;
            }
        }
        out
    }

    fn add(&self, o: &Poly) -> Poly {
        let mut out = *self;
        out.0.iter_mut().zip(o.0.iter()).for_each(|(a, b)| *a += b);
        out
    }

    fn scale(&self, s: f64) -> Poly {
        let mut out = *self;
        out.0.iter_mut().for_each(|a| *a *= s);
        out
    }
}

fn homog(v: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.y, 1.0)
}

/// Essential matrices `E` with `x_iᵀ E x_j = 0` for five correspondences.
pub fn five_point_essentials(corr: &[Correspondence; 5]) -> Vec<Matrix3<f64>> {
    let mut q = SMatrix::<f64, 9, 9>::zeros();
    for (k, c) in corr.iter().enumerate() {
        let (a, b) = (homog(&c.0), homog(&c.1));
        for r in 0..3 {
            for col in 0..3 {
                q[(k, 3 * r + col)] = a[r] * b[col];
            }
        }
    }
    let svd = q.svd(false, true);
    let Some(vt) = svd.v_t else { return Vec::new() };
    // null space: right singular vectors of the four smallest singular values
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|a, b| svd.singular_values[*a].total_cmp(&svd.singular_values[*b]));
    let basis: Vec<Matrix3<f64>> = order[..4].iter().map(|&k| Matrix3::from_fn(|r, c| vt[(k, 3 * r + c)])).collect();
    let (bx, by, bz, bw) = (&basis[0], &basis[1], &basis[2], &basis[3]);

    let e: Vec<Vec<Poly>> = (0..3)
        .map(|r| (0..3).map(|c| Poly::linear(bx[(r, c)], by[(r, c)], bz[(r, c)], bw[(r, c)])).collect())
        .collect();

    let mut rows: Vec<Poly> = Vec::with_capacity(10);
    let minor = |a: usize, b: usize, c: usize, d: usize| e[a][c].mul(&e[b][d]).add(&e[a][d].mul(&e[b][c]).scale(-1.0));
    let det = e[0][0]
        .mul(&minor(1, 2, 1, 2))
        .add(&e[0][1].mul(&minor(1, 2, 0, 2)).scale(-1.0))
        .add(&e[0][2].mul(&minor(1, 2, 0, 1)));
    rows.push(det);

    let mut eet = vec![vec![Poly::zero(); 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            for k in 0..3 {
                eet[r][c] = eet[r][c].add(&e[r][k].mul(&e[c][k]));
            }
        }
    }
    let trace = eet[0][0].add(&eet[1][1]).add(&eet[2][2]);
    for r in 0..3 {
        for c in 0..3 {
            let mut p = Poly::zero();
            for k in 0..3 {
                p = p.add(&eet[r][k].mul(&e[k][c]));
            }
            rows.push(p.scale(2.0).add(&trace.mul(&e[r][c]).scale(-1.0)));
        }
    }

    let mut m = DMatrix::<f64>::from_fn(10, 20, |r, c| rows[r].0[c]);
    // Gauss-Jordan on the cubic columns
    for col in 0..10 {
        let piv = (col..10).max_by(|a, b| m[(*a, col)].abs().total_cmp(&m[(*b, col)].abs())).unwrap();
        if m[(piv, col)].abs() < 1e-12 {
            return Vec::new();
        }
        m.swap_rows(col, piv);
        let p = m[(col, col)];
        for c in 0..20 {
            m[(col, c)] /= p;
        }
        for r in 0..10 {
            if r != col {
                let f = m[(r, col)];
                if f != 0.0 {
                    for c in 0..20 {
                        m[(r, c)] -= f * m[(col, c)];
                    }
                }
            }
        }
    }

    // multiplication by x on the basis
    let mut action = DMatrix::<f64>::zeros(10, 10);
    for k in 0..6 {
        for b in 0..10 {
            action[(k, b)] = -m[(k, 10 + b)];
        }
    }
    action[(6, 0)] = 1.0;
    action[(7, 1)] = 1.0;
    action[(8, 2)] = 1.0;
    action[(9, 6)] = 1.0;

    let mut out = Vec::new();
    for ev in action.complex_eigenvalues().iter() {
        if ev.im.abs() > 1e-8 * (1.0 + ev.re.abs()) {
            continue;
        }
        let shifted = &action - DMatrix::<f64>::identity(10, 10) * ev.re;
        let svd = shifted.svd(false, true);
        let Some(vt) = svd.v_t else { continue };
        let k = svd.singular_values.imin();
        let v = vt.row(k);
        if v[9].abs() < 1e-14 {
            continue;
        }
        let (x, y, z) = (v[6] / v[9], v[7] / v[9], v[8] / v[9]);
        let em = bx * x + by * y + bz * z + bw;
        if em.iter().all(|v| v.is_finite()) {
            out.push(em);
        }
    }
    out
}

/// Squared Sampson distance of `x_iᵀ E x_j = 0`.
pub(crate) fn sampson_sq(c: &Correspondence, e: &Matrix3<f64>) -> f64 {
    let (a, b) = (homog(&c.0), homog(&c.1));
    let eb = e * b;
    let eta = e.transpose() * a;
    let num = a.dot(&eb);
    num * num / (eb.x * eb.x + eb.y * eb.y + eta.x * eta.x + eta.y * eta.y).max(1e-300)
}

/// The (R, t) among the four decompositions of `e` that places the most
/// points in front of both cameras.
pub fn decompose_essential(e: &Matrix3<f64>, corr: &[Correspondence]) -> (Matrix3<f64>, Vector3<f64>, usize) {
    let svd = e.svd(true, true);
    let mut u = svd.u.unwrap();
    let mut vt = svd.v_t.unwrap();
    if u.determinant() < 0.0 {
        u.column_mut(2).neg_mut();
    }
    if vt.determinant() < 0.0 {
        vt.row_mut(2).neg_mut();
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let t = u.column(2).into_owned();
    let mut best = (Matrix3::identity(), t, 0usize);
    for r in [u * w * vt, u * w.transpose() * vt] {
        for t in [t, -t] {
            let good = corr.iter().filter(|c| ray_depths(c, &r, &t).map_or(false, |(a, b)| a > 0.0 && b > 0.0)).count();
            if good > best.2 {
                best = (r, t, good);
            }
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct FivePointResult {
    /// Rotation of camera j into camera i.
    pub rotation: UnitQuaternion<f64>,
    /// Unit position of camera j in camera i's frame.
    pub translation: Vector3<f64>,
    pub inliers: Vec<bool>,
}

pub fn five_point_ransac(
    correspondences: &[Correspondence],
    focal_px: f64,
    cfg: &RansacConfig,
) -> Result<FivePointResult, InitError> {
    let n = correspondences.len();
    if n < 5 {
        return Err(InitError::TooFewCorrespondences(n));
    }
    let thr_sq = (cfg.threshold_px / focal_px).powi(2);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    // MSAC: inliers first, truncated squared error to break ties
    let mut best: Option<(usize, f64, Matrix3<f64>)> = None;
    let mut needed = cfg.max_iterations;
    let mut it = 0;
    while it < needed {
        it += 1;
        let idx = sample(&mut rng, n, 5);
        let sample: [Correspondence; 5] = std::array::from_fn(|k| correspondences[idx.index(k)]);
        for e in five_point_essentials(&sample) {
            let d: Vec<f64> = correspondences.iter().map(|c| sampson_sq(c, &e)).collect();
            let count = d.iter().filter(|v| **v < thr_sq).count();
            let score: f64 = d.iter().map(|v| v.min(thr_sq)).sum();
            if best.as_ref().map_or(true, |b| count > b.0 || (count == b.0 && score < b.1)) {
                let ratio = count as f64 / n as f64;
                needed = if ratio >= 1.0 {
                    1
                } else {
                    (((1.0 - cfg.confidence).ln() / (1.0 - ratio.powi(5)).ln()).ceil() as usize)
                        .clamp(1, cfg.max_iterations)
                };
                best = Some((count, score, e));
            }
        }
    }
    let Some((count, _, e)) = best else {
        return Err(InitError::NoConsensus(0.0));
    };
    let ratio = count as f64 / n as f64;
    if ratio < cfg.min_inlier_ratio {
        return Err(InitError::NoConsensus(ratio));
    }
    let inliers: Vec<bool> = correspondences.iter().map(|c| sampson_sq(c, &e) < thr_sq).collect();
    let inlier_corr: Vec<Correspondence> =
        correspondences.iter().zip(&inliers).filter(|(_, m)| **m).map(|(c, _)| *c).collect();
    let (r, t, _) = decompose_essential(&e, &inlier_corr);
    let rotation = UnitQuaternion::from_matrix(&r);
    Ok(FivePointResult { rotation, translation: t.normalize(), inliers })
}
