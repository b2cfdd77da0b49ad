//! Shared geometric kernels: covariance factorization, guarded inversion and
//! the closed-form maximum of a 3D Gaussian along a ray.
//!
//! Everything here works in `f64`.

use nalgebra::{Matrix2, Matrix3, SymmetricEigen, UnitQuaternion, Vector2, Vector3};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat2 = Matrix2<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = UnitQuaternion<f64>;

/// Eigenvalues below this fraction of the largest one are clamped before inversion.
pub const EIGEN_CLAMP_RATIO: f64 = 1e-7;

/// Tolerance used when checking that a direction is unit length.
pub const UNIT_TOLERANCE: f64 = 1e-6;

pub fn is_unit(v: &Vec3) -> bool {
    (v.norm() - 1.0).abs() <= UNIT_TOLERANCE
}

pub fn is_finite3(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// `Σ = R · diag(s)² · Rᵀ`.
pub fn covariance_from_shape(scale: &Vec3, rotation: &Quat) -> Result<Mat3> {
    if !is_finite3(scale) || !rotation.coords.iter().all(|c| c.is_finite()) {
        return Err(Error::invalid("non-finite scale or rotation"));
    }
    if scale.iter().any(|&s| s <= 0.0) {
        return Err(Error::invalid(format!("scale must be positive, got {scale:?}")));
    }
    let r = rotation.to_rotation_matrix().into_inner();
    let s2 = Mat3::from_diagonal(&scale.component_mul(scale));
    Ok(r * s2 * r.transpose())
}

/// Inverse of a symmetric positive semi-definite matrix with tiny eigenvalues
/// clamped to `EIGEN_CLAMP_RATIO · λmax`.
pub fn guarded_inverse(cov: &Mat3) -> Result<Mat3> {
    if !cov.iter().all(|c| c.is_finite()) {
        return Err(Error::DegenerateCovariance("non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(*cov);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if max <= 0.0 || min <= 0.0 {
        return Err(Error::DegenerateCovariance(format!(
            "eigenvalues {:?} are not strictly positive",
            eig.eigenvalues.as_slice()
        )));
    }
    let floor = max * EIGEN_CLAMP_RATIO;
    if min >= floor {
        // The eigenvectors of nearly repeated eigenvalues are only accurate to
        // about sqrt(eps); a direct inverse is much tighter when nothing is clamped.
        if let Some(inv) = cov.try_inverse() {
            return Ok(0.5 * (inv + inv.transpose()));
        }
    }
    let inv_diag = eig.eigenvalues.map(|l| 1.0 / l.max(floor));
    Ok(eig.eigenvectors * Mat3::from_diagonal(&inv_diag) * eig.eigenvectors.transpose())
}

/// Distance along `o + τ v` where the Gaussian `(μ, Σ⁻¹)` peaks.
#[inline]
pub fn ray_gaussian_argmax_inv(mean: &Vec3, cov_inv: &Mat3, origin: &Vec3, dir: &Vec3) -> f64 {
    let sv = cov_inv * dir;
    (mean - origin).dot(&sv) / dir.dot(&sv)
}

/// `argmax_τ G(τ)` for `G(τ) = exp(-½ (o + τv − μ)ᵀ Σ⁻¹ (o + τv − μ))`.
pub fn ray_gaussian_argmax(mean: &Vec3, cov: &Mat3, origin: &Vec3, dir: &Vec3) -> Result<f64> {
    let inv = guarded_inverse(cov)?;
    Ok(ray_gaussian_argmax_inv(mean, &inv, origin, dir))
}

/// The (unnormalized) Gaussian response along a ray at distance `tau`.
pub fn gaussian_along_ray(mean: &Vec3, cov_inv: &Mat3, origin: &Vec3, dir: &Vec3, tau: f64) -> f64 {
    let x = origin + dir * tau - mean;
    (-0.5 * x.dot(&(cov_inv * x))).exp()
}

/// Unit vector perpendicular to `n`.
pub fn any_perpendicular(n: &Vec3) -> Vec3 {
    let a = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    n.cross(&a).normalize()
}

/// Orthonormal tangent frame `(t1, t2)` with `t1 × t2 = n`.
pub fn tangent_frame(n: &Vec3) -> (Vec3, Vec3) {
    let t1 = any_perpendicular(n);
    let t2 = n.cross(&t1);
    (t1, t2)
}

/// Largest eigenvalue of a symmetric 2x2 matrix.
pub fn max_eigenvalue_2x2(m: &Mat2) -> f64 {
    let mid = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    mid + (mid * mid - det).max(0.0).sqrt()
}

/// Rotation taking `+z` onto `n`.
pub fn rotation_to_normal(n: &Vec3) -> Quat {
    UnitQuaternion::rotation_between(&Vec3::z(), n)
        .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vec3::x_axis(), std::f64::consts::PI))
}

#[inline]
pub fn to_f32(v: &Vec3) -> [f32; 3] {
    [v.x as f32, v.y as f32, v.z as f32]
}

#[inline]
pub fn from_f32(v: [f32; 3]) -> Vec3 {
    Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: &Mat3, b: &Mat3, tol: f64) -> bool {
        (a - b).abs().max() <= tol
    }

    #[test]
    fn covariance_examples() {
        let id = Quat::identity();
        let c = covariance_from_shape(&Vec3::new(1.0, 1.0, 1.0), &id).unwrap();
        assert!(close(&c, &Mat3::identity(), 1e-15));

        let c = covariance_from_shape(&Vec3::new(2.0, 1.0, 1.0), &id).unwrap();
        assert!(close(&c, &Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 1.0)), 1e-15));

        // R·diag(4,1,1)·Rᵀ with R = 90° about z maps the x axis onto y.
        let rz = Quat::from_axis_angle(&Vec3::z_axis(), FRAC_PI_2);
        let c = covariance_from_shape(&Vec3::new(2.0, 1.0, 1.0), &rz).unwrap();
        assert!(close(&c, &Mat3::from_diagonal(&Vec3::new(1.0, 4.0, 1.0)), 1e-12));
    }

    #[test]
    fn covariance_rejects_bad_input() {
        let id = Quat::identity();
        assert!(covariance_from_shape(&Vec3::new(f64::NAN, 1.0, 1.0), &id).is_err());
        assert!(covariance_from_shape(&Vec3::new(0.0, 1.0, 1.0), &id).is_err());
    }

    #[test]
    fn argmax_examples() {
        let o = Vec3::zeros();
        let v = Vec3::z();
        let i = Mat3::identity();
        let t = ray_gaussian_argmax(&Vec3::new(0.0, 0.0, 5.0), &i, &o, &v).unwrap();
        assert!((t - 5.0).abs() < 1e-12);
        let t = ray_gaussian_argmax(&Vec3::new(3.0, 0.0, 5.0), &i, &o, &v).unwrap();
        assert!((t - 5.0).abs() < 1e-12);
    }

    #[test]
    fn argmax_matches_dense_scan() {
        let cov = Mat3::from_diagonal(&Vec3::new(4.0, 1.0, 1.0));
        let inv = cov.try_inverse().unwrap();
        let mu = Vec3::new(1.0, 0.0, 5.0);
        let o = Vec3::zeros();
        let v = Vec3::new(1.0, 0.0, 1.0).normalize();
        // brute force scan at 1e-4 resolution
        let mut best = (f64::NEG_INFINITY, 0.0);
        let mut tau = 0.0;
        while tau <= 10.0 {
            let g = gaussian_along_ray(&mu, &inv, &o, &v, tau);
            if g > best.0 {
                best = (g, tau);
            }
            tau += 1e-4;
        }
        let t = ray_gaussian_argmax(&mu, &cov, &o, &v).unwrap();
        assert!((t - best.1).abs() <= 1e-4, "{t} vs scan {}", best.1);
    }

    #[test]
    fn singular_covariance_is_an_error() {
        let cov = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 0.0));
        assert!(matches!(
            ray_gaussian_argmax(&Vec3::z(), &cov, &Vec3::zeros(), &Vec3::z()),
            Err(Error::DegenerateCovariance(_))
        ));
    }

    #[test]
    fn near_degenerate_covariance_is_clamped() {
        let cov = Mat3::from_diagonal(&Vec3::new(1.0, 1.0, 1e-12));
        let inv = guarded_inverse(&cov).unwrap();
        assert!((inv[(2, 2)] - 1e7).abs() < 1.0);
    }

    fn arb_vec(lo: f64, hi: f64) -> impl Strategy<Value = Vec3> {
        (lo..hi, lo..hi, lo..hi).prop_map(|(x, y, z)| Vec3::new(x, y, z))
    }

    fn arb_quat() -> impl Strategy<Value = Quat> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("non-zero", |(a, b, c, d)| a * a + b * b + c * c + d * d > 1e-3)
            .prop_map(|(w, x, y, z)| Quat::from_quaternion(nalgebra::Quaternion::new(w, x, y, z)))
    }

    proptest! {
        #[test]
        fn covariance_is_positive_definite(s in arb_vec(0.01, 3.0), q in arb_quat(),
                                           xs in proptest::collection::vec(arb_vec(-1.0, 1.0), 100)) {
            let c = covariance_from_shape(&s, &q).unwrap();
            prop_assert!((c - c.transpose()).abs().max() < 1e-12);
            for x in xs.iter().filter(|x| x.norm() > 1e-6) {
                prop_assert!(x.dot(&(c * x)) > 0.0);
            }
            let mut eig: Vec<f64> = SymmetricEigen::new(c).eigenvalues.iter().copied().collect();
            let mut sq: Vec<f64> = s.iter().map(|v| v * v).collect();
            eig.sort_by(f64::total_cmp);
            sq.sort_by(f64::total_cmp);
            for (a, b) in eig.iter().zip(&sq) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + b));
            }
        }

        #[test]
        fn argmax_dominates_samples(s in arb_vec(0.05, 2.0), q in arb_quat(), mu in arb_vec(-3.0, 3.0),
                                    o in arb_vec(-3.0, 3.0), d in arb_vec(-1.0, 1.0),
                                    taus in proptest::collection::vec(-20.0..20.0f64, 1000)) {
            prop_assume!(d.norm() > 1e-3);
            let v = d.normalize();
            let cov = covariance_from_shape(&s, &q).unwrap();
            let inv = guarded_inverse(&cov).unwrap();
            let t = ray_gaussian_argmax_inv(&mu, &inv, &o, &v);
            let peak = gaussian_along_ray(&mu, &inv, &o, &v, t);
            for &tau in &taus {
                prop_assert!(peak >= gaussian_along_ray(&mu, &inv, &o, &v, tau) * (1.0 - 1e-12));
            }
        }

        #[test]
        fn argmax_is_scale_invariant(s in arb_vec(0.05, 2.0), q in arb_quat(), mu in arb_vec(-3.0, 3.0),
                                     d in arb_vec(-1.0, 1.0), k in 0.01..100.0f64) {
            prop_assume!(d.norm() > 1e-3);
            let v = d.normalize();
            let cov = covariance_from_shape(&s, &q).unwrap();
            let o = Vec3::zeros();
            let a = ray_gaussian_argmax(&mu, &cov, &o, &v).unwrap();
            let b = ray_gaussian_argmax(&mu, &(cov * k), &o, &v).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "a={a} b={b}");
        }
    }
}
