//! 360° equirectangular color and depth panoramas rendered by splatting onto
//! unit-sphere tangent planes.
//!
//! Pixel `(i, j)` has its center at `(u, v) = (i + 0.5, j + 0.5)` and looks along
//! `(sin φ cos θ, sin θ, cos θ cos φ)` with `φ = π(2u − W)/W` and
//! `θ = π(v − H/2)/H`. Row 0 therefore looks toward `−y` and row `H − 1`
//! toward `+y`; column `W/2` looks down `+z`.

use std::f64::consts::{FRAC_PI_2, PI};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{max_eigenvalue_2x2, tangent_frame, Mat2, Mat3, Vec3};
use crate::primitive::GaussianPrimitive;
use crate::sh::splat_color;
use crate::splat::{CUTOFF_SQ, DILATION, MAX_ALPHA, MIN_ALPHA, MIN_TRANSMITTANCE, TILE_SIZE};

/// Depth value of pixels that see nothing.
pub const MISS: f32 = f32::INFINITY;

/// Accumulated alpha below which a panorama pixel is a miss.
pub const PANORAMA_COVERAGE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    pub width: usize,
    pub height: usize,
    /// Linear RGB, row-major.
    pub color: Vec<[f32; 3]>,
    /// Euclidean distance from the panorama center, or [`MISS`].
    pub depth: Vec<f32>,
}

impl Panorama {
    /// All-miss panorama of height `height` and width `2 · height`.
    pub fn empty(height: usize) -> Self {
        let width = 2 * height;
        Panorama {
            width,
            height,
            color: vec![[0.0; 3]; width * height],
            depth: vec![MISS; width * height],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width != 2 * self.height || self.height == 0 {
            return Err(Error::invalid(format!("panorama must be 2H×H, got {}×{}", self.width, self.height)));
        }
        let n = self.width * self.height;
        if self.color.len() != n || self.depth.len() != n {
            return Err(Error::invalid("panorama buffers have the wrong length"));
        }
        if self.depth.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::invalid("panorama depth must be positive or the miss sentinel"));
        }
        if self.color.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::invalid("panorama color must be finite"));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, col: usize, row: usize) -> usize {
        row * self.width + col
    }

    /// Largest finite depth, if any.
    pub fn max_finite_depth(&self) -> Option<f32> {
        self.depth.iter().copied().filter(|d| d.is_finite()).reduce(f32::max)
    }

    /// Copy with columns cyclically shifted so that new column `i` is old column `i + shift`.
    pub fn rotated_columns(&self, shift: isize) -> Panorama {
        let mut out = self.clone();
        let w = self.width as isize;
        for row in 0..self.height {
            for col in 0..self.width {
                let src = (col as isize + shift).rem_euclid(w) as usize;
                out.color[self.index(col, row)] = self.color[self.index(src, row)];
                out.depth[self.index(col, row)] = self.depth[self.index(src, row)];
            }
        }
        out
    }
}

/// Differential of `μ ↦ μ/‖μ‖`: `(‖μ‖² I − μ μᵀ) / ‖μ‖³`.
pub fn optimal_jacobian(mu: &Vec3) -> Result<Mat3> {
    let r = mu.norm();
    if !(r > 1e-6) {
        return Err(Error::DegeneratePosition(r));
    }
    let r2 = r * r;
    Ok((Mat3::identity() * r2 - mu * mu.transpose()) / (r2 * r))
}

/// Unit direction for continuous panorama coordinates.
pub fn pixel_to_direction(u: f64, v: f64, width: usize, height: usize) -> Vec3 {
    let (w, h) = (width as f64, height as f64);
    let phi = PI * (2.0 * u - w) / w;
    let theta = PI * (v - 0.5 * h) / h;
    Vec3::new(phi.sin() * theta.cos(), theta.sin(), theta.cos() * phi.cos())
}

/// Continuous coordinates `(u, v)` with `u ∈ [0, W)` and `v ∈ [0, H]`.
/// At the poles `atan2(0, 0) = 0` puts `u` at `W/2`.
pub fn direction_to_pixel(d: &Vec3, width: usize, height: usize) -> (f64, f64) {
    let (w, h) = (width as f64, height as f64);
    let phi = d.x.atan2(d.z);
    let theta = d.y.clamp(-1.0, 1.0).asin();
    let mut u = 0.5 * w + w * phi / (2.0 * PI);
    if u >= w {
        u -= w;
    }
    if u < 0.0 {
        u += w;
    }
    (u, 0.5 * h + h * theta / PI)
}

/// Texel containing a direction.
pub fn direction_to_texel(d: &Vec3, width: usize, height: usize) -> (usize, usize) {
    let (u, v) = direction_to_pixel(d, width, height);
    ((u.floor() as usize).min(width - 1), (v.floor().max(0.0) as usize).min(height - 1))
}

/// Derivatives of `(u, v)` with respect to the direction, for unit `d`.
pub fn direction_to_pixel_gradient(d: &Vec3, width: usize, height: usize) -> (Vec3, Vec3) {
    let (w, h) = (width as f64, height as f64);
    let rho2 = (d.x * d.x + d.z * d.z).max(1e-300);
    let du = Vec3::new(d.z, 0.0, -d.x) * (w / (2.0 * PI * rho2));
    let dv = Vec3::new(0.0, h / (PI * (1.0 - d.y * d.y).max(1e-300).sqrt()), 0.0);
    (du, dv)
}

#[derive(Debug, Clone)]
struct SphereSplat {
    index: usize,
    distance: f64,
    dir: Vec3,
    t1: Vec3,
    t2: Vec3,
    conic: [f64; 3],
    opacity: f64,
    color: [f64; 3],
    cap: f64,
}

impl SphereSplat {
    #[inline]
    fn alpha_along(&self, r: &Vec3) -> Option<f64> {
        let k = r.dot(&self.dir);
        if k <= 0.0 {
            return None;
        }
        // Intersection with the tangent plane x·c = 1, in tangent coordinates.
        let ex = r.dot(&self.t1) / k;
        let ey = r.dot(&self.t2) / k;
        let d2 = self.conic[0] * ex * ex + 2.0 * self.conic[1] * ex * ey + self.conic[2] * ey * ey;
        if d2 > CUTOFF_SQ {
            return None;
        }
        let a = (self.opacity * (-0.5 * d2).exp()).min(MAX_ALPHA);
        (a >= MIN_ALPHA).then_some(a)
    }
}

fn prepare_sphere_splats(scene: &[GaussianPrimitive], center: &Vec3, height: usize) -> Result<Vec<SphereSplat>> {
    let pixel_angle = PI / height as f64;
    let dilation = DILATION * pixel_angle * pixel_angle;
    let mut out = Vec::with_capacity(scene.len());
    for (index, prim) in scene.iter().enumerate() {
        let mu = prim.position - center;
        let Ok(jac) = optimal_jacobian(&mu) else {
            continue;
        };
        let distance = mu.norm();
        let dir = mu / distance;
        let (t1, t2) = tangent_frame(&dir);
        let cov_t = jac * prim.covariance()? * jac.transpose();
        let b = nalgebra::Matrix3x2::from_columns(&[t1, t2]);
        let mut cov2: Mat2 = b.transpose() * cov_t * b;
        cov2 = 0.5 * (cov2 + cov2.transpose()) + Mat2::identity() * dilation;
        let det = cov2.determinant();
        if det <= 0.0 || !det.is_finite() {
            continue;
        }
        let conic = [cov2[(1, 1)] / det, -cov2[(0, 1)] / det, cov2[(0, 0)] / det];
        let cap = ((3.0 * max_eigenvalue_2x2(&cov2).sqrt()).atan() + pixel_angle).min(FRAC_PI_2);
        out.push(SphereSplat {
            index,
            distance,
            dir,
            t1,
            t2,
            conic,
            opacity: prim.opacity,
            color: splat_color(&prim.sh, &dir),
            cap,
        });
    }
    out.sort_by(|a, b| a.distance.total_cmp(&b.distance).then(a.index.cmp(&b.index)));
    Ok(out)
}

/// Pixel column ranges (inclusive, within `[0, W)`) covered by an azimuth interval.
fn column_ranges(phi_lo: f64, phi_hi: f64, width: usize) -> Vec<(usize, usize)> {
    let w = width as f64;
    let first = (0.5 * w + w * phi_lo / (2.0 * PI) - 0.5).ceil() as i64;
    let last = (0.5 * w + w * phi_hi / (2.0 * PI) - 0.5).floor() as i64;
    if last < first {
        return Vec::new();
    }
    if last - first + 1 >= width as i64 {
        return vec![(0, width - 1)];
    }
    let a = first.rem_euclid(width as i64) as usize;
    let b = last.rem_euclid(width as i64) as usize;
    if a <= b {
        vec![(a, b)]
    } else {
        vec![(a, width - 1), (0, b)]
    }
}

fn bin_sphere_splats(splats: &[SphereSplat], width: usize, height: usize) -> (usize, Vec<Vec<u32>>) {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    let h = height as f64;
    for (k, s) in splats.iter().enumerate() {
        let theta_c = s.dir.y.clamp(-1.0, 1.0).asin();
        let phi_c = s.dir.x.atan2(s.dir.z);
        let lo = theta_c - s.cap;
        let hi = theta_c + s.cap;
        let row_first = ((0.5 * h + h * lo / PI - 0.5).ceil().max(0.0)) as usize;
        let row_last = (0.5 * h + h * hi / PI - 0.5).floor().min(h - 1.0);
        if row_last < row_first as f64 {
            continue;
        }
        let row_last = row_last as usize;
        let full = hi >= FRAC_PI_2 || lo <= -FRAC_PI_2 || s.cap.sin() >= theta_c.cos();
        let cols = if full {
            vec![(0, width - 1)]
        } else {
            let dphi = (s.cap.sin() / theta_c.cos()).asin();
            column_ranges(phi_c - dphi, phi_c + dphi, width)
        };
        for ty in row_first / TILE_SIZE..=row_last / TILE_SIZE {
            for &(c0, c1) in &cols {
                for tx in c0 / TILE_SIZE..=c1 / TILE_SIZE {
                    let bin = &mut bins[ty * tiles_x + tx];
                    if bin.last() != Some(&(k as u32)) {
                        bin.push(k as u32);
                    }
                }
            }
        }
    }
    (tiles_x, bins)
}

/// Renders color and Euclidean-depth panoramas seen from `center`.
pub fn render_panorama(scene: &[GaussianPrimitive], center: &Vec3, height: usize) -> Result<Panorama> {
    if height == 0 {
        return Err(Error::invalid("panorama height must be positive"));
    }
    let width = 2 * height;
    let splats = prepare_sphere_splats(scene, center, height)?;
    let (tiles_x, bins) = bin_sphere_splats(&splats, width, height);

    let tiles: Vec<Vec<(usize, [f32; 3], f32)>> = bins
        .par_iter()
        .enumerate()
        .map(|(t, list)| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let mut out = Vec::with_capacity(TILE_SIZE * TILE_SIZE);
            for row in ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(height) {
                for col in tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(width) {
                    let r = pixel_to_direction(col as f64 + 0.5, row as f64 + 0.5, width, height);
                    let mut trans = 1.0;
                    let mut color = [0.0f64; 3];
                    let mut alpha = 0.0;
                    let mut depth = 0.0;
                    for &k in list {
                        let s = &splats[k as usize];
                        if let Some(a) = s.alpha_along(&r) {
                            let wgt = trans * a;
                            for c in 0..3 {
                                color[c] += wgt * s.color[c];
                            }
                            alpha += wgt;
                            depth += wgt * s.distance;
                            trans *= 1.0 - a;
                            if trans < MIN_TRANSMITTANCE {
                                break;
                            }
                        }
                    }
                    let d = if alpha >= PANORAMA_COVERAGE { (depth / alpha) as f32 } else { MISS };
                    out.push((row * width + col, [color[0] as f32, color[1] as f32, color[2] as f32], d));
                }
            }
            out
        })
        .collect();

    let mut pano = Panorama::empty(height);
    for tile in tiles {
        for (i, c, d) in tile {
            pano.color[i] = c;
            pano.depth[i] = d;
        }
    }
    average_pole_rows(&mut pano);
    Ok(pano)
}

/// Replaces the first and last rows by their azimuthal mean.
pub fn average_pole_rows(pano: &mut Panorama) {
    let w = pano.width;
    for row in [0, pano.height - 1] {
        let range = row * w..(row + 1) * w;
        let mut c = [0.0f64; 3];
        for p in &pano.color[range.clone()] {
            for k in 0..3 {
                c[k] += p[k] as f64;
            }
        }
        let mean = [(c[0] / w as f64) as f32, (c[1] / w as f64) as f32, (c[2] / w as f64) as f32];
        let finite: Vec<f64> = pano.depth[range.clone()].iter().filter(|d| d.is_finite()).map(|&d| d as f64).collect();
        let d = if finite.is_empty() { MISS } else { (finite.iter().sum::<f64>() / finite.len() as f64) as f32 };
        for i in range {
            pano.color[i] = mean;
            pano.depth[i] = d;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn jacobian_on_axis() {
        let j = optimal_jacobian(&Vec3::z()).unwrap();
        let expect = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0);
        assert!((j - expect).abs().max() < 1e-15);
        assert!(matches!(optimal_jacobian(&Vec3::new(0.0, 0.0, 1e-9)), Err(Error::DegeneratePosition(_))));
    }

    #[test]
    fn jacobian_annihilates_radial_and_has_expected_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mu = Vec3::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            if mu.norm() < 1e-3 {
                continue;
            }
            let j = optimal_jacobian(&mu).unwrap();
            assert!((j * mu).norm() < 1e-12 * mu.norm().max(1.0));
            assert!((j - j.transpose()).abs().max() < 1e-15);
            let mut e: Vec<f64> = nalgebra::SymmetricEigen::new(j).eigenvalues.iter().copied().collect();
            e.sort_by(f64::total_cmp);
            let inv = 1.0 / mu.norm();
            assert!(e[0].abs() < 1e-12 && (e[1] - inv).abs() < 1e-12 && (e[2] - inv).abs() < 1e-12);
        }
    }

    #[test]
    fn mapping_examples() {
        let (w, h) = (1024, 512);
        let d = pixel_to_direction(512.0, 256.0, w, h);
        assert!((d - Vec3::z()).norm() < 1e-15);
        let d = pixel_to_direction(768.0, 256.0, w, h);
        assert!((d - Vec3::x()).norm() < 1e-15);
        let d = pixel_to_direction(100.0, 0.0, w, h);
        assert!((d - Vec3::new(0.0, -1.0, 0.0)).norm() < 1e-15);

        let (u, v) = direction_to_pixel(&Vec3::z(), w, h);
        assert!((u - 512.0).abs() < 1e-12 && (v - 256.0).abs() < 1e-12);
        assert_eq!(direction_to_texel(&Vec3::y(), w, h).1, h - 1);
        assert_eq!(direction_to_texel(&-Vec3::y(), w, h).1, 0);
    }

    #[test]
    fn round_trip_within_pixel_angle() {
        let (w, h) = (1024, 512);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if d.norm() < 1e-3 {
                continue;
            }
            let d = d.normalize();
            let (u, v) = direction_to_pixel(&d, w, h);
            let back = pixel_to_direction(u, v, w, h);
            assert!(back.dot(&d).clamp(-1.0, 1.0).acos() < PI / h as f64);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (w, h) = (64, 32);
        let d = Vec3::new(0.3, -0.4, 0.7).normalize();
        let (du, dv) = direction_to_pixel_gradient(&d, w, h);
        let step = 1e-6;
        for k in 0..3 {
            let mut e = Vec3::zeros();
            e[k] = step;
            let (u1, v1) = direction_to_pixel(&(d + e).normalize(), w, h);
            let (u0, v0) = direction_to_pixel(&(d - e).normalize(), w, h);
            // project e onto the tangent plane before comparing
            let et = (e - d * d.dot(&e)) / step;
            assert!(((u1 - u0) / (2.0 * step) - du.dot(&et)).abs() < 1e-5);
            assert!(((v1 - v0) / (2.0 * step) - dv.dot(&et)).abs() < 1e-5);
        }
    }

    #[test]
    fn column_ranges_wrap() {
        assert_eq!(column_ranges(-0.1, 0.1, 64), vec![(31, 32)]);
        let r = column_ranges(PI - 0.2, PI + 0.2, 64);
        assert_eq!(r, vec![(62, 63), (0, 1)]);
        assert_eq!(column_ranges(-4.0, 4.0, 64), vec![(0, 63)]);
    }

    #[test]
    fn single_splat_depth() {
        let g = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, 5.0), 0.2, 1.0, [0.7, 0.2, 0.1]);
        let p = render_panorama(&[g], &Vec3::zeros(), 64).unwrap();
        let (col, row) = (64, 32);
        let d = p.depth[p.index(col, row)];
        assert!((d - 5.0).abs() / 5.0 < 0.01, "{d}");
        assert_eq!(p.depth[p.index(0, 32)], MISS);
        assert!(p.validate().is_ok());
    }

    #[test]
    fn empty_scene_is_all_miss() {
        let p = render_panorama(&[], &Vec3::zeros(), 16).unwrap();
        assert!(p.depth.iter().all(|&d| d == MISS));
    }
}
