//! Image, normal, and silhouette losses with their gradients.
//!
//! `L = (1 − λ1)·L1 + λ1·L_D-SSIM + λ2·L_normal + λ3·L_mask`

use serde::{Deserialize, Serialize};

use crate::buffer::RgbImage;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::metrics::{check_shape, gaussian_taps, ssim_plane};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub lambda_dssim: f64,
    pub lambda_normal: f64,
    pub lambda_mask: f64,
    pub ssim_window: usize,
    pub ssim_sigma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda_dssim: 0.2, lambda_normal: 0.2, lambda_mask: 1.0, ssim_window: 11, ssim_sigma: 1.5 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_dssim", self.lambda_dssim), ("lambda_normal", self.lambda_normal), ("lambda_mask", self.lambda_mask)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite value ≥ 0, got {v}")));
            }
        }
        if self.ssim_window == 0 || self.ssim_window % 2 == 0 {
            return Err(Error::Config(format!("ssim_window must be odd, got {}", self.ssim_window)));
        }
        if !(self.ssim_sigma > 0.0) {
            return Err(Error::Config(format!("ssim_sigma must be positive, got {}", self.ssim_sigma)));
        }
        Ok(())
    }

    pub(crate) fn taps(&self) -> Vec<f64> {
        gaussian_taps(self.ssim_window, self.ssim_sigma)
    }
}

/// Unweighted loss components of one view.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub l1: f64,
    pub dssim: f64,
    pub normal: f64,
    pub mask: f64,
}

impl LossTerms {
    pub(crate) fn add_scaled(&mut self, other: &LossTerms, s: f64) {
        self.l1 += s * other.l1;
        self.dssim += s * other.dssim;
        self.normal += s * other.normal;
        self.mask += s * other.mask;
    }
}

pub fn loss_total(terms: &LossTerms, cfg: &LossConfig) -> f64 {
    (1.0 - cfg.lambda_dssim) * terms.l1 + cfg.lambda_dssim * terms.dssim + cfg.lambda_normal * terms.normal + cfg.lambda_mask * terms.mask
}

/// Mean absolute per-channel difference.
pub fn loss_l1(rendered: &RgbImage, target: &RgbImage) -> Result<f64> {
    check_shape(rendered, target)?;
    Ok(l1_planes(&to_f64(rendered), &to_f64(target), false).0)
}

/// `(1 − SSIM) / 2` with a Gaussian window, averaged over channels.
pub fn loss_dssim(rendered: &RgbImage, target: &RgbImage, cfg: &LossConfig) -> Result<f64> {
    check_shape(rendered, target)?;
    cfg.validate()?;
    Ok(dssim_planes(&to_f64(rendered), &to_f64(target), rendered.width, rendered.height, &cfg.taps(), false).0)
}

pub(crate) fn to_f64(img: &RgbImage) -> Vec<[f64; 3]> {
    img.data.iter().map(|p| p.map(|v| v as f64)).collect()
}

/// L1 and, optionally, its gradient with respect to `x`. The gradient at an
/// exact tie is zero.
pub(crate) fn l1_planes(x: &[[f64; 3]], y: &[[f64; 3]], want_grad: bool) -> (f64, Vec<[f64; 3]>) {
    let n = (3 * x.len()) as f64;
    let mut sum = 0.0;
    let mut grad = if want_grad { vec![[0.0; 3]; x.len()] } else { Vec::new() };
    for (i, (a, b)) in x.iter().zip(y).enumerate() {
        for c in 0..3 {
            let d = a[c] - b[c];
            sum += d.abs();
            if want_grad {
                grad[i][c] = if d > 0.0 {
                    1.0 / n
                } else if d < 0.0 {
                    -1.0 / n
                } else {
                    0.0
                };
            }
        }
    }
    (sum / n, grad)
}

pub(crate) fn dssim_planes(x: &[[f64; 3]], y: &[[f64; 3]], w: usize, h: usize, taps: &[f64], want_grad: bool) -> (f64, Vec<[f64; 3]>) {
    let mut s = 0.0;
    let mut grad = if want_grad { vec![[0.0; 3]; x.len()] } else { Vec::new() };
    for c in 0..3 {
        let xc: Vec<f64> = x.iter().map(|p| p[c]).collect();
        let yc: Vec<f64> = y.iter().map(|p| p[c]).collect();
        let (sc, g) = ssim_plane(&xc, &yc, w, h, taps, want_grad);
        s += sc / 3.0;
        if let Some(g) = g {
            for (dst, gv) in grad.iter_mut().zip(g) {
                dst[c] = -gv / 6.0;
            }
        }
    }
    ((1.0 - s) / 2.0, grad)
}

/// Normals from the gradient of a ray-distance depth map.
///
/// Each covered pixel is back-projected along its view ray. Tangents use
/// central differences where both neighbors are covered and one-sided ones
/// otherwise. Normals face the camera. Pixels without a usable tangent in
/// either direction get the zero vector.
pub fn depth_to_normal(depth: &[f32], covered: &[bool], camera: &Camera) -> Result<Vec<Vec3>> {
    let (w, h) = (camera.width, camera.height);
    if depth.len() != w * h || covered.len() != w * h {
        return Err(Error::invalid(format!("depth map of {} pixels does not match a {w}x{h} camera", depth.len())));
    }
    let eye = camera.center();
    let points: Vec<Option<Vec3>> = (0..w * h)
        .map(|i| {
            let d = depth[i] as f64;
            (covered[i] && d.is_finite()).then(|| eye + camera.pixel_ray(i % w, i / w).dir * d)
        })
        .collect();
    let at = |x: isize, y: isize| -> Option<Vec3> {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            return None;
        }
        points[y as usize * w + x as usize]
    };
    let tangent = |x: isize, y: isize, dx: isize, dy: isize| -> Option<Vec3> {
        let p = at(x, y)?;
        match (at(x + dx, y + dy), at(x - dx, y - dy)) {
            (Some(a), Some(b)) => Some((a - b) / 2.0),
            (Some(a), None) => Some(a - p),
            (None, Some(b)) => Some(p - b),
            (None, None) => None,
        }
    };
    let mut out = vec![Vec3::zeros(); w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let (Some(tx), Some(ty)) = (tangent(x, y, 1, 0), tangent(x, y, 0, 1)) else { continue };
            let n = tx.cross(&ty);
            let len = n.norm();
            if !(len > 0.0) {
                continue;
            }
            let p = at(x, y).expect("tangents imply a point");
            let n = n / len;
            out[y as usize * w + x as usize] = if n.dot(&(eye - p)) < 0.0 { -n } else { n };
        }
    }
    Ok(out)
}

/// Mean over masked pixels of `1 − n̂·n_d`, where `n̂` is `n` normalized.
/// Pixels where either normal is zero are skipped.
pub fn loss_normal(normals: &[Vec3], depth_normals: &[Vec3], mask: &[bool]) -> f64 {
    normal_terms(normals, depth_normals, mask, false).0
}

pub(crate) fn normal_terms(normals: &[Vec3], depth_normals: &[Vec3], mask: &[bool], want_grad: bool) -> (f64, Vec<Vec3>) {
    let usable = |i: usize| mask[i] && normals[i].norm() > 0.0 && depth_normals[i].norm() > 0.0;
    let count = (0..normals.len()).filter(|&i| usable(i)).count();
    let mut grad = if want_grad { vec![Vec3::zeros(); normals.len()] } else { Vec::new() };
    if count == 0 {
        return (0.0, grad);
    }
    let mut sum = 0.0;
    for i in (0..normals.len()).filter(|&i| usable(i)) {
        let len = normals[i].norm();
        let u = normals[i] / len;
        let nd = depth_normals[i];
        sum += 1.0 - u.dot(&nd);
        if want_grad {
            grad[i] = -(nd - u * u.dot(&nd)) / (len * count as f64);
        }
    }
    (sum / count as f64, grad)
}

/// Mean absolute difference between accumulated alpha and the target silhouette.
pub fn loss_mask(alpha: &[f64], silhouette: &[f32]) -> Result<f64> {
    if alpha.len() != silhouette.len() {
        return Err(Error::invalid(format!("alpha has {} pixels, silhouette {}", alpha.len(), silhouette.len())));
    }
    if alpha.is_empty() {
        return Ok(0.0);
    }
    Ok(alpha.iter().zip(silhouette).map(|(a, s)| (a - *s as f64).abs()).sum::<f64>() / alpha.len() as f64)
}
