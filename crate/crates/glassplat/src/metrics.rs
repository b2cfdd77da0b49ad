//! Image quality metrics on linear data: PSNR and Gaussian-windowed SSIM.
//!
//! SSIM uses a separable Gaussian window with zero padding ("same" output
//! size), so the window operator is self-adjoint. The fitter relies on that
//! when it back-propagates through D-SSIM.

use crate::buffer::RgbImage;
use crate::error::{Error, Result};

pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

/// PSNR with unit peak over all channels.
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    let mse = mse(a, b)?;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

pub fn mse(a: &RgbImage, b: &RgbImage) -> Result<f64> {
    check_shape(a, b)?;
    let mut sum = 0.0;
    for (p, q) in a.data.iter().zip(&b.data) {
        for c in 0..3 {
            let d = p[c] as f64 - q[c] as f64;
            sum += d * d;
        }
    }
    Ok(sum / (3 * a.data.len()) as f64)
}

/// PSNR restricted to pixels where `mask` is true.
pub fn psnr_masked(a: &RgbImage, b: &RgbImage, mask: &[bool]) -> Result<f64> {
    check_shape(a, b)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for ((p, q), &m) in a.data.iter().zip(&b.data).zip(mask) {
        if m {
            for c in 0..3 {
                let d = p[c] as f64 - q[c] as f64;
                sum += d * d;
            }
            n += 3;
        }
    }
    if n == 0 {
        return Ok(f64::INFINITY);
    }
    let mse = sum / n as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

pub(crate) fn check_shape(a: &RgbImage, b: &RgbImage) -> Result<()> {
    if !a.same_shape(b) {
        return Err(Error::invalid(format!(
            "image shapes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// Normalized 1-D Gaussian taps for an odd window size.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let half = (size / 2) as isize;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= s);
    taps
}

/// Separable zero-padded "same" filtering of a row-major `w × h` plane.
pub fn blur(src: &[f64], w: usize, h: usize, taps: &[f64]) -> Vec<f64> {
    let half = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let xx = x as isize + k as isize - half;
                if xx >= 0 && (xx as usize) < w {
                    acc += t * src[y * w + xx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let yy = y as isize + k as isize - half;
                if yy >= 0 && (yy as usize) < h {
                    acc += t * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = acc;
        }
    }
    out
}

/// Mean SSIM of one channel plane and, if requested, its gradient with respect to `x`.
pub(crate) fn ssim_plane(x: &[f64], y: &[f64], w: usize, h: usize, taps: &[f64], want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let n = (w * h) as f64;
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mx = blur(x, w, h, taps);
    let my = blur(y, w, h, taps);
    let sxx = blur(&xx, w, h, taps);
    let syy = blur(&yy, w, h, taps);
    let sxy = blur(&xy, w, h, taps);

    let mut total = 0.0;
    let mut da = vec![0.0; w * h];
    let mut db = vec![0.0; w * h];
    let mut dc = vec![0.0; w * h];
    for p in 0..w * h {
        let (mux, muy) = (mx[p], my[p]);
        let vx = sxx[p] - mux * mux;
        let vy = syy[p] - muy * muy;
        let cxy = sxy[p] - mux * muy;
        let a1 = 2.0 * mux * muy + SSIM_C1;
        let a2 = 2.0 * cxy + SSIM_C2;
        let b1 = mux * mux + muy * muy + SSIM_C1;
        let b2 = vx + vy + SSIM_C2;
        let s = a1 * a2 / (b1 * b2);
        total += s;
        if want_grad {
            // S as a function of (μx, σx², σxy):
            //   ∂S/∂μx   = 2μy·a2/(b1 b2) − 2μx·S/b1
            //   ∂S/∂σx²  = −S/b2
            //   ∂S/∂σxy  = 2·a1/(b1 b2)
            let ds_dmu = 2.0 * muy * a2 / (b1 * b2) - 2.0 * mux * s / b1;
            let ds_dvx = -s / b2;
            let ds_dcxy = 2.0 * a1 / (b1 * b2);
            // σx² = G*(x²) − μx², σxy = G*(xy) − μx μy
            da[p] = ds_dmu - 2.0 * mux * ds_dvx - muy * ds_dcxy;
            db[p] = ds_dvx;
            dc[p] = ds_dcxy;
        }
    }
    if !want_grad {
        return (total / n, None);
    }
    // The zero-padded Gaussian filter is self-adjoint.
    let ga = blur(&da, w, h, taps);
    let gb = blur(&db, w, h, taps);
    let gc = blur(&dc, w, h, taps);
    let grad = (0..w * h)
        .map(|q| (ga[q] + 2.0 * x[q] * gb[q] + y[q] * gc[q]) / n)
        .collect();
    (total / n, Some(grad))
}

fn planes(img: &RgbImage) -> [Vec<f64>; 3] {
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (c, plane) in out.iter_mut().enumerate() {
        *plane = img.data.iter().map(|p| p[c] as f64).collect();
    }
    out
}

/// Mean SSIM averaged over RGB channels.
pub fn ssim(a: &RgbImage, b: &RgbImage, window: usize, sigma: f64) -> Result<f64> {
    check_shape(a, b)?;
    let taps = gaussian_taps(window, sigma);
    let (pa, pb) = (planes(a), planes(b));
    let mut s = 0.0;
    for c in 0..3 {
        s += ssim_plane(&pa[c], &pb[c], a.width, a.height, &taps, false).0;
    }
    Ok(s / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn psnr_basics() {
        let a = RgbImage::filled(4, 4, [0.5; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = RgbImage::filled(4, 4, [0.6; 3]);
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-4);
        assert!(psnr(&a, &RgbImage::new(3, 4)).is_err());
    }

    #[test]
    fn ssim_identity_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = RgbImage::from_fn(20, 17, |_, _| [rng.gen(), rng.gen(), rng.gen()]);
        assert!((ssim(&a, &a, 11, 1.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, h) = (13, 9);
        let x: Vec<f64> = (0..w * h).map(|_| rng.gen()).collect();
        let y: Vec<f64> = (0..w * h).map(|_| rng.gen()).collect();
        let taps = gaussian_taps(7, 1.5);
        let (_, g) = ssim_plane(&x, &y, w, h, &taps, true);
        let g = g.unwrap();
        for q in [0, 5, 40, 77, w * h - 1] {
            let step = 1e-6;
            let mut xp = x.clone();
            xp[q] += step;
            let mut xm = x.clone();
            xm[q] -= step;
            let fd = (ssim_plane(&xp, &y, w, h, &taps, false).0 - ssim_plane(&xm, &y, w, h, &taps, false).0) / (2.0 * step);
            assert!((fd - g[q]).abs() < 1e-7 * (1.0 + fd.abs()), "q={q} fd={fd} g={}", g[q]);
        }
    }
}
