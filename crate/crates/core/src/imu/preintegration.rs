use nalgebra::{Matrix3, SMatrix, SVector, UnitQuaternion, Vector3};

use super::{BiasState, ImuError, ImuNoise, ImuSample};
use crate::geom::{quat_from_rotvec, renormalize, right_jacobian, skew};

pub type Matrix15 = SMatrix<f64, 15, 15>;
type Matrix15x18 = SMatrix<f64, 15, 18>;

// error-state block offsets
const A: usize = 0;
const B: usize = 3;
const T: usize = 6;
const BA: usize = 9;
const BG: usize = 12;

/// Bias deltas beyond this use full re-integration.
const MAX_FIRST_ORDER_DELTA: f64 = 0.1;

/// Midpoint steps per sample interval, on linearly interpolated readings.
pub const SUBSTEPS: usize = 8;

/// Relative motion between two instants summarised from IMU samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Preintegration {
    /// Position term.
    pub alpha: Vector3<f64>,
    /// Velocity term.
    pub beta: Vector3<f64>,
    /// Rotation from the end body frame to the start body frame.
    pub gamma: UnitQuaternion<f64>,
    /// Error covariance over (α, β, θ, b_a, b_g).
    pub covariance: Matrix15,
    /// Columns: ∂/∂b_a then ∂/∂b_g, rows as in `covariance`.
    pub jacobian_wrt_biases: SMatrix<f64, 15, 6>,
    pub dt_total: f64,
    pub linearization_bias: BiasState,
    pub noise: ImuNoise,
    /// Raw samples kept for re-integration.
    pub samples: Vec<ImuSample>,
}

/// Integrates `samples` with `bias` removed.
pub fn preintegrate(samples: &[ImuSample], bias: &BiasState, noise: &ImuNoise) -> Result<Preintegration, ImuError> {
    validate(samples)?;
    let mut alpha = Vector3::zeros();
    let mut beta = Vector3::zeros();
    let mut gamma = UnitQuaternion::identity();
    let mut cov = Matrix15::zeros();
    let mut jac = Matrix15::identity();
    let mut q = SMatrix::<f64, 18, 18>::zeros();

    for w in upsample(samples, SUBSTEPS).windows(2) {
        let (s0, s1) = (&w[0], &w[1]);
        let dt = s1.timestamp - s0.timestamp;
        let w_mid = 0.5 * (s0.gyro + s1.gyro) - bias.gyro_bias;
        let phi = w_mid * dt;
        let d_rot = quat_from_rotvec(&phi);
        let gamma1 = renormalize(gamma * d_rot);

        let r0 = gamma.to_rotation_matrix().into_inner();
        let r1 = gamma1.to_rotation_matrix().into_inner();
        let a0x = s0.accel - bias.accel_bias;
        let a1x = s1.accel - bias.accel_bias;
        let a_mid = 0.5 * (r0 * a0x + r1 * a1x);

        // linearisation of this step around the current estimate
        let rphi_t = d_rot.to_rotation_matrix().into_inner().transpose();
        let jr = right_jacobian(&phi);
        let r1a1 = r1 * skew(&a1x);
        let da_dtheta = -0.5 * (r0 * skew(&a0x) + r1a1 * rphi_t);
        let da_dba = -0.5 * (r0 + r1);
        let da_dbg = 0.5 * r1a1 * jr * dt;
        let dtheta_dng = 0.5 * jr * dt;
        let da_dng = -0.5 * r1a1 * dtheta_dng;
        let half_dt2 = 0.5 * dt * dt;

        let mut f = Matrix15::identity();
        f.fixed_view_mut::<3, 3>(A, B).copy_from(&(Matrix3::identity() * dt));
        f.fixed_view_mut::<3, 3>(A, T).copy_from(&(half_dt2 * da_dtheta));
        f.fixed_view_mut::<3, 3>(A, BA).copy_from(&(half_dt2 * da_dba));
        f.fixed_view_mut::<3, 3>(A, BG).copy_from(&(half_dt2 * da_dbg));
        f.fixed_view_mut::<3, 3>(B, T).copy_from(&(dt * da_dtheta));
        f.fixed_view_mut::<3, 3>(B, BA).copy_from(&(dt * da_dba));
        f.fixed_view_mut::<3, 3>(B, BG).copy_from(&(dt * da_dbg));
        f.fixed_view_mut::<3, 3>(T, T).copy_from(&rphi_t);
        f.fixed_view_mut::<3, 3>(T, BG).copy_from(&(-jr * dt));

        // noise order: n_a0, n_g0, n_a1, n_g1, n_ba, n_bg
        let mut v = Matrix15x18::zeros();
        for (col, ra) in [(0, r0), (6, r1)] {
            v.fixed_view_mut::<3, 3>(A, col).copy_from(&(0.5 * half_dt2 * ra));
            v.fixed_view_mut::<3, 3>(B, col).copy_from(&(0.5 * dt * ra));
        }
        for col in [3, 9] {
            v.fixed_view_mut::<3, 3>(A, col).copy_from(&(half_dt2 * da_dng));
            v.fixed_view_mut::<3, 3>(B, col).copy_from(&(dt * da_dng));
            v.fixed_view_mut::<3, 3>(T, col).copy_from(&dtheta_dng);
        }
        v.fixed_view_mut::<3, 3>(BA, 12).copy_from(&(Matrix3::identity() * dt));
        v.fixed_view_mut::<3, 3>(BG, 15).copy_from(&(Matrix3::identity() * dt));

        // densities discretised over the step
        let na = noise.accel_noise_density.powi(2) / dt;
        let ng = noise.gyro_noise_density.powi(2) / dt;
        let nba = noise.accel_random_walk.powi(2) / dt;
        let nbg = noise.gyro_random_walk.powi(2) / dt;
        for (k, var) in [na, ng, na, ng, nba, nbg].into_iter().enumerate() {
            for d in 0..3 {
                q[(3 * k + d, 3 * k + d)] = var;
            }
        }

        alpha += beta * dt + half_dt2 * a_mid;
        beta += a_mid * dt;
        gamma = gamma1;
        jac = f * jac;
        cov = f * cov * f.transpose() + v * q * v.transpose();
        cov = 0.5 * (cov + cov.transpose());
    }

    Ok(Preintegration {
        alpha,
        beta,
        gamma,
        covariance: cov,
        jacobian_wrt_biases: jac.fixed_view::<15, 6>(0, BA).into_owned(),
        dt_total: samples.last().unwrap().timestamp - samples[0].timestamp,
        linearization_bias: *bias,
        noise: *noise,
        samples: samples.to_vec(),
    })
}

fn upsample(samples: &[ImuSample], m: usize) -> Vec<ImuSample> {
    let mut out = Vec::with_capacity((samples.len() - 1) * m + 1);
    for w in samples.windows(2) {
        for k in 0..m {
            let u = k as f64 / m as f64;
            out.push(ImuSample {
                timestamp: w[0].timestamp + u * (w[1].timestamp - w[0].timestamp),
                gyro: w[0].gyro.lerp(&w[1].gyro, u),
                accel: w[0].accel.lerp(&w[1].accel, u),
            });
        }
    }
    out.push(*samples.last().unwrap());
    out
}

fn validate(samples: &[ImuSample]) -> Result<(), ImuError> {
    if samples.len() < 2 {
        return Err(ImuError::EmptyWindow);
    }
    for (i, w) in samples.windows(2).enumerate() {
        if !(w[1].timestamp > w[0].timestamp) {
            return Err(ImuError::NonMonotoneTimestamps(i + 1));
        }
    }
    Ok(())
}

/// Samples covering `[t0, t1]`, with the endpoints linearly interpolated
/// when they fall between samples.
pub fn samples_between(samples: &[ImuSample], t0: f64, t1: f64) -> Result<Vec<ImuSample>, ImuError> {
    if samples.len() < 2 || !(t1 > t0) {
        return Err(ImuError::EmptyWindow);
    }
    let first = samples[0].timestamp;
    let last = samples[samples.len() - 1].timestamp;
    // tolerate rounding at the window edges
    let eps = 1e-9;
    if t0 < first - eps || t1 > last + eps {
        return Err(ImuError::EmptyWindow);
    }
    let t0 = t0.max(first);
    let t1 = t1.min(last);
    let at = |t: f64| -> ImuSample {
        let idx = samples.partition_point(|s| s.timestamp < t);
        if idx < samples.len() && (samples[idx].timestamp - t).abs() <= eps {
            return samples[idx];
        }
        let hi = idx.min(samples.len() - 1).max(1);
        ImuSample::lerp(&samples[hi - 1], &samples[hi], t)
    };
    let mut out = vec![at(t0)];
    out.extend(samples.iter().filter(|s| s.timestamp > t0 + eps && s.timestamp < t1 - eps).copied());
    out.push(at(t1));
    Ok(out)
}

/// Pre-integration over `[t0, t1]`.
pub fn preintegrate_between(
    samples: &[ImuSample],
    t0: f64,
    t1: f64,
    bias: &BiasState,
    noise: &ImuNoise,
) -> Result<Preintegration, ImuError> {
    preintegrate(&samples_between(samples, t0, t1)?, bias, noise)
}

/// Rotation term only, integrated with the same sub-stepped midpoint rule
/// as [`preintegrate`].
pub fn gyro_rotation_prior(samples: &[ImuSample], gyro_bias: &Vector3<f64>) -> Result<UnitQuaternion<f64>, ImuError> {
    validate(samples)?;
    let mut gamma = UnitQuaternion::identity();
    for w in upsample(samples, SUBSTEPS).windows(2) {
        let dt = w[1].timestamp - w[0].timestamp;
        let w_mid = 0.5 * (w[0].gyro + w[1].gyro) - gyro_bias;
        gamma = renormalize(gamma * quat_from_rotvec(&(w_mid * dt)));
    }
    Ok(gamma)
}

impl Preintegration {
    pub fn d_alpha_d_ba(&self) -> Matrix3<f64> {
        self.jacobian_wrt_biases.fixed_view::<3, 3>(A, 0).into_owned()
    }
    pub fn d_alpha_d_bg(&self) -> Matrix3<f64> {
        self.jacobian_wrt_biases.fixed_view::<3, 3>(A, 3).into_owned()
    }
    pub fn d_beta_d_ba(&self) -> Matrix3<f64> {
        self.jacobian_wrt_biases.fixed_view::<3, 3>(B, 0).into_owned()
    }
    pub fn d_beta_d_bg(&self) -> Matrix3<f64> {
        self.jacobian_wrt_biases.fixed_view::<3, 3>(B, 3).into_owned()
    }
    pub fn d_theta_d_bg(&self) -> Matrix3<f64> {
        self.jacobian_wrt_biases.fixed_view::<3, 3>(T, 3).into_owned()
    }

    /// First-order corrected (α, β, γ) for a bias near the linearization point.
    pub fn corrected(&self, bias: &BiasState) -> (Vector3<f64>, Vector3<f64>, UnitQuaternion<f64>) {
        let dba = bias.accel_bias - self.linearization_bias.accel_bias;
        let dbg = bias.gyro_bias - self.linearization_bias.gyro_bias;
        let alpha = self.alpha + self.d_alpha_d_ba() * dba + self.d_alpha_d_bg() * dbg;
        let beta = self.beta + self.d_beta_d_ba() * dba + self.d_beta_d_bg() * dbg;
        let gamma = renormalize(self.gamma * quat_from_rotvec(&(self.d_theta_d_bg() * dbg)));
        (alpha, beta, gamma)
    }

    /// First-order bias update without re-integration.
    pub fn rebias_first_order(&self, new_bias: &BiasState) -> Result<Preintegration, ImuError> {
        let delta = new_bias.max_abs_delta(&self.linearization_bias);
        if delta >= MAX_FIRST_ORDER_DELTA {
            return Err(ImuError::BiasDeltaTooLarge(delta));
        }
        let (alpha, beta, gamma) = self.corrected(new_bias);
        Ok(Preintegration { alpha, beta, gamma, linearization_bias: *new_bias, ..self.clone() })
    }

    /// Bias update; re-integrates the retained samples when the delta is too
    /// large for the first-order correction.
    pub fn rebias(&self, new_bias: &BiasState) -> Preintegration {
        match self.rebias_first_order(new_bias) {
            Ok(p) => p,
            Err(_) => self.reintegrate(new_bias),
        }
    }

    pub fn reintegrate(&self, new_bias: &BiasState) -> Preintegration {
        preintegrate(&self.samples, new_bias, &self.noise).expect("retained samples were validated on construction")
    }

    /// Covariance with the rotation block expressed in the residual's
    /// parameterization, `2 vec(Δq ⊗ γ⁻¹) ≈ R(γ) δθ`.
    pub fn residual_covariance(&self) -> Matrix15 {
        let mut t = Matrix15::identity();
        t.fixed_view_mut::<3, 3>(T, T).copy_from(self.gamma.to_rotation_matrix().matrix());
        t * self.covariance * t.transpose()
    }

    /// `S` with `SᵀS` the inverse of the (α, β, θ) marginal covariance.
    pub fn sqrt_information_nav(&self) -> SMatrix<f64, 9, 9> {
        inverse_cholesky(&self.residual_covariance().fixed_view::<9, 9>(0, 0).into_owned())
    }

    /// `S` with `SᵀS` the inverse of the θ marginal covariance.
    pub fn sqrt_information_rotation(&self) -> Matrix3<f64> {
        inverse_cholesky(&self.residual_covariance().fixed_view::<3, 3>(T, T).into_owned())
    }

    /// `S` with `SᵀS` the inverse of the full residual covariance.
    pub fn sqrt_information(&self) -> Matrix15 {
        inverse_cholesky(&self.residual_covariance())
    }

    /// Stacked (α, β, θ-as-rotvec) for diagnostics.
    pub fn delta_vector(&self) -> SVector<f64, 9> {
        let mut v = SVector::<f64, 9>::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.alpha);
        v.fixed_rows_mut::<3>(3).copy_from(&self.beta);
        v.fixed_rows_mut::<3>(6).copy_from(&self.gamma.scaled_axis());
        v
    }
}

fn inverse_cholesky<const N: usize>(cov: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let scale = (0..N).map(|i| cov[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut jitter = 0.0;
    for _ in 0..8 {
        let m = cov + SMatrix::<f64, N, N>::identity() * jitter;
        if let Some(ch) = m.cholesky() {
            if let Some(inv) = ch.l().try_inverse() {
                return inv;
            }
        }
        jitter = if jitter == 0.0 { scale * 1e-12 } else { jitter * 100.0 };
    }
    SMatrix::<f64, N, N>::identity() / scale.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant(n: usize, dt: f64, gyro: Vector3<f64>, accel: Vector3<f64>) -> Vec<ImuSample> {
        (0..n).map(|i| ImuSample::new(i as f64 * dt, gyro, accel)).collect()
    }

    fn random_window(rng: &mut ChaCha8Rng, n: usize) -> Vec<ImuSample> {
        let mut g = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let mut a = Vector3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 9.81 + rng.gen_range(-2.0..2.0));
        (0..n)
            .map(|i| {
                g += Vector3::new(rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
                a += Vector3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1));
                ImuSample::new(i as f64 * 0.005, g, a)
            })
            .collect()
    }

    #[test]
    fn zero_measurements_give_zero_terms() {
        for n in [2, 3, 11, 101] {
            let s = constant(n, 1.0 / (n - 1) as f64, Vector3::zeros(), Vector3::zeros());
            let p = preintegrate(&s, &BiasState::zero(), &ImuNoise::default()).unwrap();
            assert!(p.alpha.norm() < 1e-15 && p.beta.norm() < 1e-15);
            assert!(p.gamma.angle() < 1e-15);
            assert!((p.dt_total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_rate_matches_closed_form() {
        let s = constant(201, 0.005, Vector3::new(0.0, 0.0, 0.1), Vector3::zeros());
        let p = preintegrate(&s, &BiasState::zero(), &ImuNoise::default()).unwrap();
        let expected = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.1);
        assert!(p.gamma.angle_to(&expected) < 1e-6);
        assert!(p.alpha.norm() < 1e-15 && p.beta.norm() < 1e-15);

        let prior = gyro_rotation_prior(&s, &Vector3::zeros()).unwrap();
        assert!(prior.angle_to(&expected) < 1e-9);
    }

    #[test]
    fn constant_accel_closed_form() {
        let acc = Vector3::new(0.3, -0.2, 1.0);
        let s = constant(61, 0.005, Vector3::zeros(), acc);
        let p = preintegrate(&s, &BiasState::zero(), &ImuNoise::default()).unwrap();
        assert!((p.beta - acc * 0.3).norm() < 1e-12);
        assert!((p.alpha - acc * 0.045).norm() < 1e-12);
    }

    #[test]
    fn rejects_bad_windows() {
        let one = constant(1, 0.005, Vector3::zeros(), Vector3::zeros());
        assert_eq!(preintegrate(&one, &BiasState::zero(), &ImuNoise::default()), Err(ImuError::EmptyWindow));
        let mut s = constant(5, 0.005, Vector3::zeros(), Vector3::zeros());
        s[3].timestamp = s[2].timestamp;
        assert_eq!(preintegrate(&s, &BiasState::zero(), &ImuNoise::default()), Err(ImuError::NonMonotoneTimestamps(3)));
    }

    #[test]
    fn gyro_prior_bias_sensitivity() {
        let s = constant(61, 0.005, Vector3::new(0.2, -0.1, 0.3), Vector3::zeros());
        let b = Vector3::new(0.01, 0.0, 0.0);
        let with = gyro_rotation_prior(&s, &b).unwrap();
        let without = gyro_rotation_prior(&s, &Vector3::zeros()).unwrap();
        let d = with.angle_to(&without);
        assert!((d - b.norm() * 0.3).abs() < 0.1 * b.norm() * 0.3, "{d}");
    }

    #[test]
    fn interval_additivity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let s = random_window(&mut rng, 121);
            let bias = BiasState::new(Vector3::new(0.01, -0.02, 0.0), Vector3::new(0.1, 0.0, -0.05));
            let noise = ImuNoise::default();
            let full = preintegrate(&s, &bias, &noise).unwrap();
            let a = preintegrate(&s[..50], &bias, &noise).unwrap();
            let b = preintegrate(&s[49..], &bias, &noise).unwrap();
            let alpha = a.alpha + a.beta * b.dt_total + a.gamma * b.alpha;
            let beta = a.beta + a.gamma * b.beta;
            let gamma = a.gamma * b.gamma;
            assert!((alpha - full.alpha).norm() < 1e-8);
            assert!((beta - full.beta).norm() < 1e-8);
            assert!(gamma.angle_to(&full.gamma) < 1e-8);
        }
    }

    #[test]
    fn covariance_trace_grows_with_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let s = random_window(&mut rng, 200);
        let mut prev = 0.0;
        for n in (2..200).step_by(7) {
            let p = preintegrate(&s[..n], &BiasState::zero(), &ImuNoise::default()).unwrap();
            let tr = p.covariance.trace();
            assert!(tr >= prev);
            prev = tr;
        }
    }

    #[test]
    fn rebias_identity_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = preintegrate(&random_window(&mut rng, 61), &BiasState::zero(), &ImuNoise::default()).unwrap();
        let q = p.rebias(&BiasState::zero());
        assert_eq!(p.alpha, q.alpha);
        assert_eq!(p.beta, q.beta);
        assert!(p.gamma.angle_to(&q.gamma) < 1e-15);
    }

    #[test]
    fn rebias_matches_reintegration() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let s = random_window(&mut rng, 61);
        let noise = ImuNoise::default();
        let p = preintegrate(&s, &BiasState::zero(), &noise).unwrap();

        let bg = BiasState::new(Vector3::new(0.01, -0.004, 0.006).normalize() * 0.01, Vector3::zeros());
        let exact = preintegrate(&s, &bg, &noise).unwrap();
        assert!(p.rebias(&bg).gamma.angle_to(&exact.gamma) < 1e-4);

        let ba = BiasState::new(Vector3::zeros(), Vector3::new(0.05, 0.0, 0.0));
        let exact = preintegrate(&s, &ba, &noise).unwrap();
        assert!((p.rebias(&ba).alpha - exact.alpha).norm() < 1e-4);
    }

    #[test]
    fn rebias_error_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let s = random_window(&mut rng, 61);
        let noise = ImuNoise::default();
        let p = preintegrate(&s, &BiasState::zero(), &noise).unwrap();
        let dir_g = Vector3::new(0.6, -0.3, 0.74).normalize();
        let dir_a = Vector3::new(-0.2, 0.9, 0.4).normalize();
        let err = |d: f64| {
            let b = BiasState::new(dir_g * d, dir_a * d);
            let approx = p.rebias_first_order(&b).unwrap();
            let exact = p.reintegrate(&b);
            (approx.alpha - exact.alpha).norm()
                + (approx.beta - exact.beta).norm()
                + approx.gamma.angle_to(&exact.gamma)
        };
        let (e1, e2, e3) = (err(0.04), err(0.02), err(0.01));
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        assert!(o1 >= 1.9 && o2 >= 1.9, "orders {o1} {o2}");
    }

    #[test]
    fn large_delta_is_refused_by_first_order_path() {
        let s = constant(11, 0.005, Vector3::zeros(), Vector3::zeros());
        let p = preintegrate(&s, &BiasState::zero(), &ImuNoise::default()).unwrap();
        let b = BiasState::new(Vector3::new(0.5, 0.0, 0.0), Vector3::zeros());
        assert!(matches!(p.rebias_first_order(&b), Err(ImuError::BiasDeltaTooLarge(_))));
        let q = p.rebias(&b);
        assert_eq!(q.linearization_bias, b);
    }

    #[test]
    fn bias_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let s = random_window(&mut rng, 41);
        let noise = ImuNoise::default();
        let b0 = BiasState::new(Vector3::new(0.01, 0.02, -0.01), Vector3::new(0.1, -0.1, 0.05));
        let p = preintegrate(&s, &b0, &noise).unwrap();
        let h = 1e-6;
        for k in 0..6 {
            let mut bp = b0;
            let mut bm = b0;
            if k < 3 {
                bp.accel_bias[k] += h;
                bm.accel_bias[k] -= h;
            } else {
                bp.gyro_bias[k - 3] += h;
                bm.gyro_bias[k - 3] -= h;
            }
            let pp = preintegrate(&s, &bp, &noise).unwrap();
            let pm = preintegrate(&s, &bm, &noise).unwrap();
            let da = (pp.alpha - pm.alpha) / (2.0 * h);
            let db = (pp.beta - pm.beta) / (2.0 * h);
            let dt = (pm.gamma.inverse() * pp.gamma).scaled_axis() / (2.0 * h);
            let col = p.jacobian_wrt_biases.column(k);
            assert!((da - col.fixed_rows::<3>(A)).norm() < 1e-6);
            assert!((db - col.fixed_rows::<3>(B)).norm() < 1e-6);
            assert!((dt - col.fixed_rows::<3>(T)).norm() < 1e-6);
        }
    }

    #[test]
    fn samples_between_interpolates_endpoints() {
        let s = constant(11, 0.01, Vector3::zeros(), Vector3::zeros());
        let mut s2 = s.clone();
        for (i, x) in s2.iter_mut().enumerate() {
            x.gyro.x = i as f64;
        }
        let w = samples_between(&s2, 0.015, 0.05).unwrap();
        assert!((w[0].timestamp - 0.015).abs() < 1e-15);
        assert!((w[0].gyro.x - 1.5).abs() < 1e-12);
        assert!((w.last().unwrap().timestamp - 0.05).abs() < 1e-15);
        assert_eq!(w.len(), 5);
        assert!(samples_between(&s2, -0.1, 0.05).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn covariance_is_psd(seed in any::<u64>(), n in 2usize..80) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = random_window(&mut rng, n);
            let p = preintegrate(&s, &BiasState::zero(), &ImuNoise::default()).unwrap();
            let c = p.covariance;
            prop_assert!((c - c.transpose()).amax() < 1e-18);
            let min = c.symmetric_eigen().eigenvalues.min();
            prop_assert!(min > -1e-10);
            prop_assert!((p.gamma.norm() - 1.0).abs() < 1e-12);
        }
    }
}
