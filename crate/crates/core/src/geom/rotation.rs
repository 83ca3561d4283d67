use nalgebra::{Matrix3, UnitQuaternion, Vector3};

/// Skew-symmetric matrix such that `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Exponential map from a rotation vector (axis times angle, radians) to a
/// Hamilton unit quaternion in canonical form (`w >= 0`).
pub fn quat_from_rotvec(theta: &Vector3<f64>) -> UnitQuaternion<f64> {
    canonical(UnitQuaternion::from_scaled_axis(*theta))
}

/// Logarithm map; inverse of [`quat_from_rotvec`] on the canonical hemisphere.
pub fn rotvec_from_quat(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    canonical(*q).scaled_axis()
}

/// Picks the representative of the double cover with non-negative scalar part.
pub fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Right Jacobian of SO(3): `exp(phi + d) ~= exp(phi) * exp(Jr(phi) d)`.
pub fn right_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    if theta < 1e-5 {
        return Matrix3::identity() - 0.5 * k + (1.0 / 6.0) * k * k;
    }
    let t2 = theta * theta;
    Matrix3::identity() - (1.0 - theta.cos()) / t2 * k + (theta - theta.sin()) / (t2 * theta) * k * k
}

/// Left-multiplication matrix block: lower-right 3x3 of `L(q)` where
/// `q ⊗ p = L(q) p`.
pub(crate) fn quat_left_block(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let v = q.imag();
    Matrix3::identity() * q.w + skew(&v)
}

/// Lower-right 3x3 block of the right-multiplication matrix `R(q)` where
/// `p ⊗ q = R(q) p`.
pub(crate) fn quat_right_block(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let v = q.imag();
    Matrix3::identity() * q.w - skew(&v)
}

/// Angle in radians between two rotations.
pub fn rotation_angle_between(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    a.angle_to(b)
}

/// Yaw (rotation about world z) of a body-to-world rotation, ZYX convention.
pub fn yaw_of(q: &UnitQuaternion<f64>) -> f64 {
    let r = q.to_rotation_matrix();
    let m = r.matrix();
    m[(1, 0)].atan2(m[(0, 0)])
}

/// Smallest rotation taking unit direction `from` onto unit direction `to`.
pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> UnitQuaternion<f64> {
    let a = from.normalize();
    let b = to.normalize();
    match UnitQuaternion::rotation_between(&a, &b) {
        Some(q) => q,
        // antiparallel: any axis orthogonal to `a` works
        None => {
            let helper = if a.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
            let axis = a.cross(&helper).normalize();
            UnitQuaternion::from_scaled_axis(axis * std::f64::consts::PI)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    /// Rotation matrix exponential by a 20-term Taylor series of exp(K).
    fn taylor_exp(theta: &Vector3<f64>) -> Matrix3<f64> {
        let k = skew(theta);
        let mut term = Matrix3::identity();
        let mut sum = Matrix3::identity();
        for n in 1..20 {
            term = term * k / n as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn zero_vector_is_identity() {
        let q = quat_from_rotvec(&Vector3::zeros());
        assert_eq!(q.into_inner().coords, nalgebra::Vector4::new(0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn quarter_turn_about_z() {
        let q = quat_from_rotvec(&Vector3::new(0.0, 0.0, FRAC_PI_2));
        let s = (std::f64::consts::FRAC_PI_4).sin();
        assert!((q.w - s).abs() < 1e-15);
        assert!((q.k - s).abs() < 1e-15);
        assert!(q.i.abs() < 1e-15 && q.j.abs() < 1e-15);
    }

    #[test]
    fn matches_taylor_series_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let dir = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let theta = dir.normalize() * rng.gen_range(0.0..0.5);
            let q = quat_from_rotvec(&theta);
            let diff = q.to_rotation_matrix().matrix() - taylor_exp(&theta);
            assert!(diff.amax() < 1e-12, "{}", diff.amax());
            assert!((q.norm() - 1.0).abs() < 1e-12);
            assert!(q.w >= 0.0);
        }
    }

    #[test]
    fn right_jacobian_first_order() {
        let phi = Vector3::new(0.3, -0.2, 0.5);
        let d = Vector3::new(1e-6, -2e-6, 0.5e-6);
        let lhs = quat_from_rotvec(&(phi + d));
        let rhs = quat_from_rotvec(&phi) * quat_from_rotvec(&(right_jacobian(&phi) * d));
        assert!(lhs.angle_to(&rhs) < 1e-11);
    }

    #[test]
    fn log_inverts_exp() {
        let v = Vector3::new(0.4, 0.1, -1.2);
        assert!((rotvec_from_quat(&quat_from_rotvec(&v)) - v).norm() < 1e-13);
    }

    #[test]
    fn rotation_between_handles_antiparallel() {
        let q = rotation_between(&Vector3::z(), &-Vector3::z());
        assert!((q * Vector3::z() + Vector3::z()).norm() < 1e-12);
    }
}
