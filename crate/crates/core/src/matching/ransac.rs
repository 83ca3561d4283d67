use nalgebra::{Matrix3, SMatrix, UnitQuaternion, Vector2, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{MatchConfig, MatchError};
use crate::geom::PinholeCamera;
use crate::init::{two_point_ransac, RansacConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub inliers: Vec<bool>,
    /// Pixel-domain fundamental matrix with `x_curᵀ F x_prev = 0`, when the
    /// eight-point model was used.
    pub fundamental: Option<Matrix3<f64>>,
}

impl RansacOutcome {
    pub fn inlier_count(&self) -> usize {
        self.inliers.iter().filter(|b| **b).count()
    }
}

const MIN_EIGHT_POINT: usize = 8;
const CONFIDENCE: f64 = 0.99;

fn homog(v: &Vector2<f64>) -> Vector3<f64> {
    Vector3::new(v.x, v.y, 1.0)
}

/// First-order geometric distance of `(a, b)` from the epipolar constraint
/// `bᵀ F a = 0`, in the units of the points.
pub fn sampson_distance_px(f: &Matrix3<f64>, a: &Vector2<f64>, b: &Vector2<f64>) -> f64 {
    let (a, b) = (homog(a), homog(b));
    let fa = f * a;
    let ftb = f.transpose() * b;
    let den = fa.x * fa.x + fa.y * fa.y + ftb.x * ftb.x + ftb.y * ftb.y;
    if den < 1e-30 {
        return if b.dot(&fa).abs() < 1e-15 { 0.0 } else { f64::INFINITY };
    }
    b.dot(&fa).abs() / den.sqrt()
}

/// Similarity moving the centroid to the origin with mean distance √2.
fn normalizer(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let c = points.iter().sum::<Vector2<f64>>() / n;
    let mean = points.iter().map(|p| (p - c).norm()).sum::<f64>() / n;
    let s = if mean > 1e-12 { std::f64::consts::SQRT_2 / mean } else { 1.0 };
    Matrix3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0)
}

/// Normalized eight-point estimate from `n ≥ 8` pairs, rank 2 enforced.
fn eight_point(pairs: &[(Vector2<f64>, Vector2<f64>)]) -> Option<Matrix3<f64>> {
    let ta = normalizer(&pairs.iter().map(|p| p.0).collect::<Vec<_>>());
    let tb = normalizer(&pairs.iter().map(|p| p.1).collect::<Vec<_>>());
    let mut ata = SMatrix::<f64, 9, 9>::zeros();
    for (a, b) in pairs {
        let a = ta * homog(a);
        let b = tb * homog(b);
        let row = SMatrix::<f64, 1, 9>::from_row_slice(&[
            b.x * a.x,
            b.x * a.y,
            b.x,
            b.y * a.x,
            b.y * a.y,
            b.y,
            a.x,
            a.y,
            1.0,
        ]);
        ata += row.transpose() * row;
    }
    let eig = ata.symmetric_eigen();
    let k = eig.eigenvalues.imin();
    let v = eig.eigenvectors.column(k);
    let f = Matrix3::from_row_slice(v.as_slice());
    let svd = f.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let mut s = svd.singular_values;
    s[2] = 0.0;
    let f = tb.transpose() * u * Matrix3::from_diagonal(&s) * v_t * ta;
    let norm = f.norm();
    (norm > 0.0 && norm.is_finite()).then(|| f / norm)
}

fn iterations_needed(inlier_ratio: f64, cap: usize) -> usize {
    let p_good = inlier_ratio.powi(MIN_EIGHT_POINT as i32);
    if p_good <= 0.0 {
        return cap;
    }
    if p_good >= 1.0 {
        return 1;
    }
    let n = (1.0 - CONFIDENCE).ln() / (1.0 - p_good).ln();
    (n.ceil().max(1.0) as usize).min(cap)
}

/// Robust fundamental matrix over pixel pairs `(prev, cur)`.
pub fn fundamental_ransac(
    pairs: &[(Vector2<f64>, Vector2<f64>)],
    cfg: &MatchConfig,
) -> Result<RansacOutcome, MatchError> {
    let n = pairs.len();
    if n < MIN_EIGHT_POINT {
        return Err(MatchError::TooFewMatches(n));
    }
    let score = |f: &Matrix3<f64>| -> Vec<bool> {
        pairs.iter().map(|(a, b)| sampson_distance_px(f, a, b) < cfg.ransac_threshold_px).collect()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(usize, Matrix3<f64>, Vec<bool>)> = None;
    let mut needed = cfg.ransac_iterations;
    let mut it = 0;
    while it < needed {
        it += 1;
        let idx = sample(&mut rng, n, MIN_EIGHT_POINT);
        let subset: Vec<_> = idx.iter().map(|i| pairs[i]).collect();
        let Some(f) = eight_point(&subset) else { continue };
        let mask = score(&f);
        let count = mask.iter().filter(|b| **b).count();
        if best.as_ref().is_none_or(|b| count > b.0) {
            needed = iterations_needed(count as f64 / n as f64, cfg.ransac_iterations);
            best = Some((count, f, mask));
        }
    }
    let Some((count, mut f, mut mask)) = best else {
        return Err(MatchError::TooFewMatches(n));
    };
    // one refit on the consensus set
    if count >= MIN_EIGHT_POINT {
        let inl: Vec<_> = pairs.iter().zip(&mask).filter(|(_, m)| **m).map(|(p, _)| *p).collect();
        if let Some(refit) = eight_point(&inl) {
            let refit_mask = score(&refit);
            if refit_mask.iter().filter(|b| **b).count() >= count {
                f = refit;
                mask = refit_mask;
            }
        }
    }
    Ok(RansacOutcome { inliers: mask, fundamental: Some(f) })
}

/// Epipolar outlier rejection of pixel pairs `(prev, cur)`. Uses the
/// eight-point model when there are enough pairs and otherwise the
/// two-point model given `rotation_prior` (camera `cur` to camera `prev`).
pub fn ransac_outlier_reject(
    pairs: &[(Vector2<f64>, Vector2<f64>)],
    camera: &PinholeCamera,
    rotation_prior: Option<&UnitQuaternion<f64>>,
    cfg: &MatchConfig,
) -> Result<RansacOutcome, MatchError> {
    if pairs.len() >= MIN_EIGHT_POINT {
        return fundamental_ransac(pairs, cfg);
    }
    let Some(r) = rotation_prior else {
        return Err(MatchError::TooFewMatches(pairs.len()));
    };
    let corr: Vec<_> =
        pairs.iter().map(|(a, b)| (camera.pixel_to_normalized(a), camera.pixel_to_normalized(b))).collect();
    let rc = RansacConfig {
        max_iterations: cfg.ransac_iterations,
        threshold_px: cfg.ransac_threshold_px,
        seed: cfg.seed,
        ..RansacConfig::default()
    };
    two_point_ransac(&corr, r, camera.mean_focal(), &rc)
        .map(|res| RansacOutcome { inliers: res.inliers, fundamental: None })
        .map_err(|_| MatchError::TooFewMatches(pairs.len()))
}
