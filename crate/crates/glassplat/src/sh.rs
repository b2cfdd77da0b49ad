//! Real spherical harmonics up to degree 3 in the coefficient order used by
//! 3D Gaussian splatting PLY files (DC first, then bands 1..3, `m = -l..l`).

use crate::math::Vec3;

pub const SH_COEFFS: usize = 16;

/// Per-coefficient RGB triples, index 0 is the DC term.
pub type ShCoeffs = [[f64; 3]; SH_COEFFS];

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_6,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_6,
];

/// Coefficients for a constant color `rgb` as seen after the renderer's `+0.5` offset.
pub fn dc_from_color(rgb: [f64; 3]) -> ShCoeffs {
    let mut sh = [[0.0; 3]; SH_COEFFS];
    for c in 0..3 {
        sh[0][c] = (rgb[c] - 0.5) / SH_C0;
    }
    sh
}

/// Basis values `Y_k(v)` in coefficient order.
pub fn basis(v: &Vec3) -> [f64; SH_COEFFS] {
    let (x, y, z) = (v.x, v.y, v.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * x * z,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * x * y * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// `Σ_k c_k Y_k(v)` per channel. No offset or clamping is applied.
pub fn evaluate_sh(sh: &ShCoeffs, v: &Vec3) -> [f64; 3] {
    let b = basis(v);
    let mut out = [0.0; 3];
    for (coef, y) in sh.iter().zip(b.iter()) {
        for c in 0..3 {
            out[c] += coef[c] * y;
        }
    }
    out
}

/// Splat color as used by the rasterizer: `max(SH(v) + 0.5, 0)`.
pub fn splat_color(sh: &ShCoeffs, v: &Vec3) -> [f64; 3] {
    let c = evaluate_sh(sh, v);
    [(c[0] + 0.5).max(0.0), (c[1] + 0.5).max(0.0), (c[2] + 0.5).max(0.0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(f64::from).product()
    }

    /// Associated Legendre P_l^m(x), m >= 0, including the Condon-Shortley phase.
    fn legendre(l: u32, m: u32, x: f64) -> f64 {
        let mut pmm = 1.0;
        let s = (1.0 - x * x).sqrt();
        for i in 0..m {
            pmm *= -(2.0 * i as f64 + 1.0) * s;
        }
        if l == m {
            return pmm;
        }
        let mut pmmp1 = x * (2.0 * m as f64 + 1.0) * pmm;
        for ll in (m + 2)..=l {
            let p = ((2 * ll - 1) as f64 * x * pmmp1 - (ll + m - 1) as f64 * pmm) / (ll - m) as f64;
            pmm = pmmp1;
            pmmp1 = p;
        }
        pmmp1
    }

    /// Real SH from spherical angles, independent of the Cartesian table above.
    fn real_sh(l: u32, m: i32, v: &Vec3) -> f64 {
        let theta = v.z.clamp(-1.0, 1.0).acos();
        let phi = v.y.atan2(v.x);
        let am = m.unsigned_abs();
        let k = (((2 * l + 1) as f64 / (4.0 * std::f64::consts::PI)) * factorial(l - am)
            / factorial(l + am))
        .sqrt();
        let p = legendre(l, am, theta.cos());
        match m.cmp(&0) {
            std::cmp::Ordering::Equal => k * p,
            std::cmp::Ordering::Greater => std::f64::consts::SQRT_2 * k * (am as f64 * phi).cos() * p,
            std::cmp::Ordering::Less => std::f64::consts::SQRT_2 * k * (am as f64 * phi).sin() * p,
        }
    }

    fn random_sh(rng: &mut ChaCha8Rng) -> ShCoeffs {
        let mut sh = [[0.0; 3]; SH_COEFFS];
        for k in sh.iter_mut() {
            for c in k.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
        }
        sh
    }

    #[test]
    fn dc_only_is_direction_independent() {
        let mut sh = [[0.0; 3]; SH_COEFFS];
        sh[0] = [0.3, -0.2, 1.0];
        let a = evaluate_sh(&sh, &Vec3::z());
        let b = evaluate_sh(&sh, &Vec3::new(0.6, -0.8, 0.0));
        assert_eq!(a, b);
        assert!((a[0] - 0.3 * SH_C0).abs() < 1e-15);
    }

    #[test]
    fn even_bands_have_even_parity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut sh = random_sh(&mut rng);
        for k in (1..4).chain(9..16) {
            sh[k] = [0.0; 3];
        }
        let v = Vec3::new(0.3, -0.5, 0.8).normalize();
        let a = evaluate_sh(&sh, &v);
        let b = evaluate_sh(&sh, &-v);
        for c in 0..3 {
            assert!((a[c] - b[c]).abs() < 1e-14);
        }
    }

    #[test]
    fn basis_matches_legendre_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        // 3DGS orders each band from m = -l to l and includes the Condon-Shortley phase.
        for _ in 0..200 {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if v.norm() < 1e-3 {
                continue;
            }
            let v = v.normalize();
            let table = basis(&v);
            let mut k = 0;
            for l in 0..=3u32 {
                for m in -(l as i32)..=(l as i32) {
                    let expect = real_sh(l, m, &v);
                    assert!((table[k] - expect).abs() < 1e-12, "l={l} m={m}: {} vs {expect}", table[k]);
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn random_degree3_on_axis() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sh = random_sh(&mut rng);
        let v = Vec3::z();
        let got = evaluate_sh(&sh, &v);
        let mut expect = [0.0; 3];
        // only m = 0 terms survive at the pole: indices 0, 2, 6, 12
        for (k, l) in [(0usize, 0u32), (2, 1), (6, 2), (12, 3)] {
            for c in 0..3 {
                expect[c] += sh[k][c] * real_sh(l, 0, &v);
            }
        }
        for c in 0..3 {
            assert!((got[c] - expect[c]).abs() < 1e-12);
        }
    }
}
