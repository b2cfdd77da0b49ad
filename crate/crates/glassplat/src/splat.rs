//! Tile-based forward splatting through a pinhole camera.
//!
//! Every pixel composites front to back with weights `wᵢ = Tᵢ αᵢ`. Besides
//! color, the pass blends the transparent attributes into a [`GBuffer`] and
//! places the hit point at the weight-averaged ray maximum of each Gaussian.

use rayon::prelude::*;

use crate::buffer::RgbImage;
use crate::camera::{Camera, Ray};
use crate::error::Result;
use crate::math::{guarded_inverse, ray_gaussian_argmax_inv, Mat2, Mat3, Vec2, Vec3};
use crate::primitive::GaussianPrimitive;
use crate::sh::splat_color;

pub const TILE_SIZE: usize = 16;
pub const NEAR_PLANE: f64 = 0.01;
/// Low-pass filter added to the projected covariance, in px².
pub const DILATION: f64 = 0.3;
pub const MAX_ALPHA: f64 = 0.99;
pub const MIN_ALPHA: f64 = 1.0 / 255.0;
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Squared Mahalanobis radius of a splat's support (3σ).
pub const CUTOFF_SQ: f64 = 9.0;

/// A primitive projected into image space.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    pub center: Vec2,
    /// `J W Σ Wᵀ Jᵀ` before dilation.
    pub cov: Mat2,
    /// Camera-space depth of the mean.
    pub depth: f64,
    pub index: usize,
}

impl Splat2D {
    pub fn dilated_cov(&self) -> Mat2 {
        self.cov + Mat2::identity() * DILATION
    }
}

/// Projects with the local affine approximation of the perspective map.
/// Returns `None` for primitives at or behind the near plane.
pub fn project_pinhole(prim: &GaussianPrimitive, camera: &Camera, index: usize) -> Result<Option<Splat2D>> {
    let pc = camera.world_to_camera(&prim.position);
    if pc.z <= NEAR_PLANE {
        return Ok(None);
    }
    let cov3 = prim.covariance()?;
    // The affine approximation is evaluated with the lateral position clamped
    // to 1.3× the half field of view, as in the reference 3D-GS rasterizer;
    // otherwise splats far outside the frustum blow up across the screen.
    let lim_x = 1.3 * (camera.cx.max(camera.width as f64 - camera.cx)) / camera.fx;
    let lim_y = 1.3 * (camera.cy.max(camera.height as f64 - camera.cy)) / camera.fy;
    let z = pc.z;
    let x = (pc.x / z).clamp(-lim_x, lim_x) * z;
    let y = (pc.y / z).clamp(-lim_y, lim_y) * z;
    let j = nalgebra::Matrix2x3::new(
        camera.fx / z,
        0.0,
        -camera.fx * x / (z * z),
        0.0,
        camera.fy / z,
        -camera.fy * y / (z * z),
    );
    let t = j * camera.rotation;
    let cov = t * cov3 * t.transpose();
    let (u, v) = camera.project_camera(&pc);
    Ok(Some(Splat2D {
        center: Vec2::new(u, v),
        cov: 0.5 * (cov + cov.transpose()),
        depth: z,
        index,
    }))
}

/// A projected splat with everything the compositor needs.
#[derive(Debug, Clone)]
pub struct PreparedSplat {
    pub index: usize,
    pub depth: f64,
    pub center: Vec2,
    /// Inverse of the dilated covariance as `(a, b, c)` for `[[a, b], [b, c]]`.
    pub conic: [f64; 3],
    pub opacity: f64,
    pub color: [f64; 3],
    pub mean: Vec3,
    pub cov_inv: Mat3,
    /// Inclusive-exclusive pixel-space bounds `[x0, x1) × [y0, y1)` of the support ellipse.
    pub bounds: [f64; 4],
}

impl PreparedSplat {
    /// Blending opacity at continuous pixel coordinates, or `None` when skipped.
    #[inline]
    pub fn alpha_at(&self, px: f64, py: f64) -> Option<f64> {
        let dx = px - self.center.x;
        let dy = py - self.center.y;
        let d2 = self.conic[0] * dx * dx + 2.0 * self.conic[1] * dx * dy + self.conic[2] * dy * dy;
        if d2 > CUTOFF_SQ {
            return None;
        }
        let a = (self.opacity * (-0.5 * d2).exp()).min(MAX_ALPHA);
        if a < MIN_ALPHA {
            None
        } else {
            Some(a)
        }
    }
}

/// Projects the scene and returns splats sorted by `(depth, index)`.
pub fn prepare_splats(scene: &[GaussianPrimitive], camera: &Camera) -> Result<Vec<PreparedSplat>> {
    let eye = camera.center();
    let mut out = Vec::with_capacity(scene.len());
    for (index, prim) in scene.iter().enumerate() {
        let Some(s) = project_pinhole(prim, camera, index)? else {
            continue;
        };
        let cov = s.dilated_cov();
        let det = cov.determinant();
        if det <= 0.0 || !det.is_finite() {
            continue;
        }
        let conic = [cov[(1, 1)] / det, -cov[(0, 1)] / det, cov[(0, 0)] / det];
        // Exact axis-aligned bounds of the ellipse dᵀ Σ⁻¹ d = 9.
        let hx = 3.0 * cov[(0, 0)].sqrt();
        let hy = 3.0 * cov[(1, 1)].sqrt();
        let bounds = [s.center.x - hx, s.center.x + hx, s.center.y - hy, s.center.y + hy];
        if bounds[1] < 0.0 || bounds[0] > camera.width as f64 || bounds[3] < 0.0 || bounds[2] > camera.height as f64 {
            continue;
        }
        let view = (prim.position - eye).normalize();
        out.push(PreparedSplat {
            index,
            depth: s.depth,
            center: s.center,
            conic,
            opacity: prim.opacity,
            color: splat_color(&prim.sh, &view),
            mean: prim.position,
            cov_inv: guarded_inverse(&prim.covariance()?)?,
            bounds,
        });
    }
    out.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
    Ok(out)
}

/// Walks splats front to back at one pixel, calling `visit(splat, weight)`.
/// Returns the final transmittance.
#[inline]
pub fn composite<'a>(
    splats: impl Iterator<Item = &'a PreparedSplat>,
    px: f64,
    py: f64,
    mut visit: impl FnMut(&'a PreparedSplat, f64),
) -> f64 {
    let mut t = 1.0;
    for s in splats {
        if let Some(a) = s.alpha_at(px, py) {
            visit(s, t * a);
            t *= 1.0 - a;
            if t < MIN_TRANSMITTANCE {
                break;
            }
        }
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Channels {
    ColorOnly,
    #[default]
    All,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub background: [f32; 3],
    /// Pixels with accumulated alpha below this are flagged uncovered.
    pub coverage_threshold: f32,
    pub channels: Channels,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            background: [0.0; 3],
            coverage_threshold: 0.5,
            channels: Channels::All,
        }
    }
}

/// Per-pixel alpha-blended attributes. Material maps hold the raw blends
/// `Σ wᵢ aᵢ`; `hit_point` and `depth` are normalized by the accumulated alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct GBuffer {
    pub width: usize,
    pub height: usize,
    pub alpha: Vec<f32>,
    pub normal: Vec<[f32; 3]>,
    pub hit_point: Vec<[f32; 3]>,
    /// Distance along the pixel's view ray.
    pub depth: Vec<f32>,
    pub transparency: Vec<f32>,
    pub ior: Vec<f32>,
    pub roughness: Vec<f32>,
    pub metallic: Vec<f32>,
    pub base_color: Vec<[f32; 3]>,
    pub background: [f32; 3],
    pub coverage_threshold: f32,
}

impl GBuffer {
    fn new(width: usize, height: usize, opts: &RenderOptions) -> Self {
        let n = width * height;
        GBuffer {
            width,
            height,
            alpha: vec![0.0; n],
            normal: vec![[0.0; 3]; n],
            hit_point: vec![[0.0; 3]; n],
            depth: vec![0.0; n],
            transparency: vec![0.0; n],
            ior: vec![0.0; n],
            roughness: vec![0.0; n],
            metallic: vec![0.0; n],
            base_color: vec![[0.0; 3]; n],
            background: opts.background,
            coverage_threshold: opts.coverage_threshold,
        }
    }

    pub fn covered(&self, i: usize) -> bool {
        self.alpha[i] >= self.coverage_threshold
    }

    pub fn coverage_mask(&self) -> Vec<bool> {
        (0..self.alpha.len()).map(|i| self.covered(i)).collect()
    }

    /// Renormalized blended normal, or `None` where the blend vanishes.
    pub fn unit_normal(&self, i: usize) -> Option<Vec3> {
        let n = crate::math::from_f32(self.normal[i]);
        let len = n.norm();
        (len > 0.0).then(|| n / len)
    }
}

/// Running per-pixel blend.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct PixelBlend {
    pub color: [f64; 3],
    pub alpha: f64,
    pub normal: Vec3,
    pub tau: f64,
    pub transparency: f64,
    pub ior: f64,
    pub roughness: f64,
    pub metallic: f64,
    pub base: [f64; 3],
}

impl PixelBlend {
    #[inline]
    pub fn add(&mut self, s: &PreparedSplat, prim: &GaussianPrimitive, w: f64, ray: &Ray, full: bool) {
        for c in 0..3 {
            self.color[c] += w * s.color[c];
        }
        self.alpha += w;
        if full {
            let a = &prim.attrs;
            self.normal += a.normal * w;
            self.tau += w * ray_gaussian_argmax_inv(&s.mean, &s.cov_inv, &ray.origin, &ray.dir);
            self.transparency += w * a.transparency;
            self.ior += w * a.ior;
            self.roughness += w * a.roughness;
            self.metallic += w * a.metallic;
            for c in 0..3 {
                self.base[c] += w * a.base_color[c];
            }
        }
    }
}

/// Rendered color plus, when requested, the G-buffer.
#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub color: RgbImage,
    pub gbuffer: Option<GBuffer>,
}

struct TileBins {
    tiles_x: usize,
    tiles_y: usize,
    bins: Vec<Vec<u32>>,
}

fn bin_tiles(splats: &[PreparedSplat], width: usize, height: usize) -> TileBins {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut bins = vec![Vec::new(); tiles_x * tiles_y];
    for (k, s) in splats.iter().enumerate() {
        // Pixel centers x + 0.5 inside [lo, hi], widened slightly against rounding.
        let Some((x0, x1)) = pixel_span(s.bounds[0], s.bounds[1], width) else { continue };
        let Some((y0, y1)) = pixel_span(s.bounds[2], s.bounds[3], height) else { continue };
        for ty in y0 / TILE_SIZE..=y1 / TILE_SIZE {
            for tx in x0 / TILE_SIZE..=x1 / TILE_SIZE {
                bins[ty * tiles_x + tx].push(k as u32);
            }
        }
    }
    TileBins { tiles_x, tiles_y, bins }
}

fn pixel_span(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    const SLACK: f64 = 1e-3;
    let first = (lo - 0.5 - SLACK).ceil().max(0.0);
    let last = (hi - 0.5 + SLACK).floor().min(n as f64 - 1.0);
    (last >= first).then(|| (first as usize, last as usize))
}

/// Renders color and, for [`Channels::All`], the G-buffer.
pub fn rasterize(scene: &[GaussianPrimitive], camera: &Camera, opts: &RenderOptions) -> Result<RenderOutput> {
    let splats = prepare_splats(scene, camera)?;
    let (w, h) = (camera.width, camera.height);
    let bins = bin_tiles(&splats, w, h);
    let full = opts.channels == Channels::All;

    let tiles: Vec<(usize, Vec<(usize, PixelBlend, f64)>)> = (0..bins.tiles_x * bins.tiles_y)
        .into_par_iter()
        .map(|t| {
            let (tx, ty) = (t % bins.tiles_x, t / bins.tiles_x);
            let list = &bins.bins[t];
            let mut out = Vec::with_capacity(TILE_SIZE * TILE_SIZE);
            for y in ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h) {
                for x in tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w) {
                    let ray = camera.pixel_ray(x, y);
                    let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                    let mut blend = PixelBlend::default();
                    let t_final = composite(list.iter().map(|&k| &splats[k as usize]), px, py, |s, wgt| {
                        blend.add(s, &scene[s.index], wgt, &ray, full)
                    });
                    out.push((y * w + x, blend, t_final));
                }
            }
            (t, out)
        })
        .collect();

    let mut color = RgbImage::new(w, h);
    let mut gbuffer = full.then(|| GBuffer::new(w, h, opts));
    let eye = camera.center();
    for (_, pixels) in tiles {
        for (i, b, t_final) in pixels {
            let mut c = [0f32; 3];
            for k in 0..3 {
                c[k] = (b.color[k] + t_final * opts.background[k] as f64) as f32;
            }
            color.data[i] = c;
            if let Some(g) = gbuffer.as_mut() {
                write_gbuffer(g, i, &b, camera, &eye);
            }
        }
    }
    Ok(RenderOutput { color, gbuffer })
}

/// Untiled reference for [`rasterize`]: every pixel sorts the whole projected
/// scene by `(depth, index)` and walks all of it.
pub fn rasterize_reference(scene: &[GaussianPrimitive], camera: &Camera, opts: &RenderOptions) -> Result<RenderOutput> {
    let mut splats = prepare_splats(scene, camera)?;
    let (w, h) = (camera.width, camera.height);
    let full = opts.channels == Channels::All;
    let mut color = RgbImage::new(w, h);
    let mut gbuffer = full.then(|| GBuffer::new(w, h, opts));
    let eye = camera.center();
    for y in 0..h {
        for x in 0..w {
            splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));
            let ray = camera.pixel_ray(x, y);
            let mut blend = PixelBlend::default();
            let t_final = composite(splats.iter(), x as f64 + 0.5, y as f64 + 0.5, |s, wgt| blend.add(s, &scene[s.index], wgt, &ray, full));
            let i = y * w + x;
            for k in 0..3 {
                color.data[i][k] = (blend.color[k] + t_final * opts.background[k] as f64) as f32;
            }
            if let Some(g) = gbuffer.as_mut() {
                write_gbuffer(g, i, &blend, camera, &eye);
            }
        }
    }
    Ok(RenderOutput { color, gbuffer })
}

fn write_gbuffer(g: &mut GBuffer, i: usize, b: &PixelBlend, camera: &Camera, eye: &Vec3) {
    g.alpha[i] = b.alpha as f32;
    g.normal[i] = crate::math::to_f32(&b.normal);
    g.transparency[i] = b.transparency as f32;
    g.ior[i] = b.ior as f32;
    g.roughness[i] = b.roughness as f32;
    g.metallic[i] = b.metallic as f32;
    g.base_color[i] = [b.base[0] as f32, b.base[1] as f32, b.base[2] as f32];
    if b.alpha > 0.0 {
        let depth = b.tau / b.alpha;
        let ray = camera.pixel_ray(i % g.width, i / g.width);
        g.depth[i] = depth as f32;
        g.hit_point[i] = crate::math::to_f32(&(eye + ray.dir * depth));
    }
}

/// One primitive's weight at one pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contribution {
    pub index: u32,
    pub weight: f64,
    /// Ray distance of the primitive's maximum along the pixel's view ray.
    pub tau: f64,
}

/// Per-pixel contribution lists in compressed-row form.
#[derive(Debug, Clone)]
pub struct Contributions {
    pub width: usize,
    pub height: usize,
    pub offsets: Vec<usize>,
    pub entries: Vec<Contribution>,
    pub transmittance: Vec<f64>,
}

impl Contributions {
    pub fn pixel(&self, i: usize) -> &[Contribution] {
        &self.entries[self.offsets[i]..self.offsets[i + 1]]
    }
}

/// Records every `(primitive, weight, τ*)` term of the blend. With frozen
/// shapes these weights make every blended attribute linear in the
/// per-primitive attributes.
pub fn rasterize_contributions(scene: &[GaussianPrimitive], camera: &Camera) -> Result<Contributions> {
    let splats = prepare_splats(scene, camera)?;
    let (w, h) = (camera.width, camera.height);
    let bins = bin_tiles(&splats, w, h);
    let tiles: Vec<Vec<(usize, Vec<Contribution>, f64)>> = (0..bins.tiles_x * bins.tiles_y)
        .into_par_iter()
        .map(|t| {
            let (tx, ty) = (t % bins.tiles_x, t / bins.tiles_x);
            let list = &bins.bins[t];
            let mut out = Vec::new();
            for y in ty * TILE_SIZE..((ty + 1) * TILE_SIZE).min(h) {
                for x in tx * TILE_SIZE..((tx + 1) * TILE_SIZE).min(w) {
                    let ray = camera.pixel_ray(x, y);
                    let mut entries = Vec::new();
                    let t_final = composite(list.iter().map(|&k| &splats[k as usize]), x as f64 + 0.5, y as f64 + 0.5, |s, wgt| {
                        entries.push(Contribution {
                            index: s.index as u32,
                            weight: wgt,
                            tau: ray_gaussian_argmax_inv(&s.mean, &s.cov_inv, &ray.origin, &ray.dir),
                        })
                    });
                    out.push((y * w + x, entries, t_final));
                }
            }
            out
        })
        .collect();
    let mut per_pixel: Vec<(Vec<Contribution>, f64)> = vec![(Vec::new(), 1.0); w * h];
    for tile in tiles {
        for (i, e, t) in tile {
            per_pixel[i] = (e, t);
        }
    }
    let mut offsets = Vec::with_capacity(w * h + 1);
    let mut entries = Vec::new();
    let mut transmittance = Vec::with_capacity(w * h);
    offsets.push(0);
    for (e, t) in per_pixel {
        entries.extend(e);
        offsets.push(entries.len());
        transmittance.push(t);
    }
    Ok(Contributions {
        width: w,
        height: h,
        offsets,
        entries,
        transmittance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{max_eigenvalue_2x2, Quat};
    use crate::primitive::TransparentAttributes;
    use crate::sh::dc_from_color;

    fn axis_camera(f: f64, size: usize) -> Camera {
        Camera::new(Mat3::identity(), Vec3::zeros(), (f, f), (size as f64 / 2.0, size as f64 / 2.0), size, size).unwrap()
    }

    #[test]
    fn on_axis_projection_is_isotropic() {
        let cam = axis_camera(100.0, 64);
        let z = 4.0;
        let p = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, z), 1.0, 1.0, [0.5; 3]);
        let s = project_pinhole(&p, &cam, 0).unwrap().unwrap();
        let expect = (100.0 / z) * (100.0 / z);
        assert!((s.cov - Mat2::identity() * expect).abs().max() < 1e-9);
        assert!((s.center - Vec2::new(32.0, 32.0)).norm() < 1e-12);
    }

    #[test]
    fn near_plane_culls() {
        let cam = axis_camera(100.0, 64);
        let p = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, 0.01), 1.0, 1.0, [0.5; 3]);
        assert!(project_pinhole(&p, &cam, 0).unwrap().is_none());
        let p = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, -3.0), 1.0, 1.0, [0.5; 3]);
        assert!(project_pinhole(&p, &cam, 0).unwrap().is_none());
    }

    #[test]
    fn doubling_focal_doubles_std() {
        let p = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, 3.0), 0.2, 1.0, [0.5; 3]);
        let a = project_pinhole(&p, &axis_camera(50.0, 64), 0).unwrap().unwrap();
        let b = project_pinhole(&p, &axis_camera(100.0, 64), 0).unwrap().unwrap();
        assert!((b.cov[(0, 0)].sqrt() / a.cov[(0, 0)].sqrt() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn dilated_eigenvalues_bounded_below() {
        let mut p = GaussianPrimitive::isotropic(Vec3::new(0.3, -0.2, 3.0), 0.001, 1.0, [0.5; 3]);
        p.scale = Vec3::new(1.0, 1e-4, 1e-4);
        p.rotation = Quat::from_euler_angles(0.3, 0.2, 0.1);
        let s = project_pinhole(&p, &axis_camera(100.0, 64), 0).unwrap().unwrap();
        let d = s.dilated_cov();
        let mid = 0.5 * (d[(0, 0)] + d[(1, 1)]);
        let min = mid - (mid * mid - d.determinant()).max(0.0).sqrt();
        assert!(min >= DILATION - 1e-9);
        assert!(max_eigenvalue_2x2(&d) >= min);
    }

    fn opaque_disc(z: f64, color: [f64; 3], normal: Vec3) -> GaussianPrimitive {
        let mut p = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, z), 1.0, 1.0, color);
        p.attrs = TransparentAttributes { normal, ..Default::default() };
        p
    }

    #[test]
    fn single_opaque_splat() {
        let cam = axis_camera(20.0, 16);
        let p = opaque_disc(2.0, [0.2, 0.4, 0.6], Vec3::new(0.0, 0.0, -1.0));
        let out = rasterize(std::slice::from_ref(&p), &cam, &RenderOptions::default()).unwrap();
        // The center pixel is at 8.5: slightly off-axis, α clamps to 0.99.
        let c = out.color.get(8, 8);
        for (k, expect) in [0.2, 0.4, 0.6].iter().enumerate() {
            assert!((c[k] as f64 - 0.99 * expect).abs() < 1e-6);
        }
        let g = out.gbuffer.unwrap();
        let i = 8 * 16 + 8;
        assert!((g.unit_normal(i).unwrap() - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-6);
    }

    #[test]
    fn two_term_blend() {
        // Opacity 0.5 with a wide footprint gives α ≈ 0.5 at the center pixel.
        let cam = axis_camera(1.0, 2);
        let mut a = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, 1.0), 1e3, 0.5, [0.8, 0.0, 0.0]);
        let mut b = GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, 2.0), 1e3, 0.5, [0.0, 0.0, 0.6]);
        a.attrs.normal = Vec3::z();
        b.attrs.normal = Vec3::z();
        let out = rasterize(&[b, a], &cam, &RenderOptions::default()).unwrap();
        let c = out.color.get(0, 0);
        assert!((c[0] as f64 - 0.5 * 0.8).abs() < 1e-4);
        assert!((c[2] as f64 - 0.25 * 0.6).abs() < 1e-4);
    }

    #[test]
    fn shared_normal_is_recovered() {
        let cam = axis_camera(30.0, 32);
        let n = Vec3::new(0.2, -0.3, -0.9).normalize();
        let scene: Vec<_> = (0..10)
            .map(|k| {
                let mut p = GaussianPrimitive::isotropic(
                    Vec3::new(0.1 * (k as f64 - 5.0), 0.05 * k as f64, 2.0 + 0.1 * k as f64),
                    0.2,
                    0.6,
                    [0.5; 3],
                );
                p.attrs.normal = n;
                p
            })
            .collect();
        let g = rasterize(&scene, &cam, &RenderOptions::default()).unwrap().gbuffer.unwrap();
        let mut checked = 0;
        for i in 0..g.alpha.len() {
            if g.alpha[i] > 0.5 {
                assert!((g.unit_normal(i).unwrap() - n).norm() < 1e-6);
                checked += 1;
            }
        }
        assert!(checked > 10);
    }

    #[test]
    fn single_primitive_hit_point_is_its_argmax() {
        let cam = axis_camera(30.0, 32);
        let mut p = GaussianPrimitive::isotropic(Vec3::new(0.1, 0.0, 2.0), 0.3, 0.7, [0.5; 3]);
        p.scale = Vec3::new(0.3, 0.1, 0.05);
        p.rotation = Quat::from_euler_angles(0.4, 0.1, -0.3);
        let g = rasterize(std::slice::from_ref(&p), &cam, &RenderOptions::default()).unwrap().gbuffer.unwrap();
        let inv = guarded_inverse(&p.covariance().unwrap()).unwrap();
        for y in 0..32 {
            for x in 0..32 {
                let i = y * 32 + x;
                if g.alpha[i] > 0.0 {
                    let r = cam.pixel_ray(x, y);
                    let tau = ray_gaussian_argmax_inv(&p.position, &inv, &r.origin, &r.dir);
                    let hp = crate::math::from_f32(g.hit_point[i]);
                    assert!((hp - r.at(tau)).norm() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn contributions_reproduce_alpha() {
        let cam = axis_camera(30.0, 20);
        let scene = vec![
            GaussianPrimitive::isotropic(Vec3::new(0.0, 0.0, 2.0), 0.3, 0.7, [0.5; 3]),
            GaussianPrimitive::isotropic(Vec3::new(0.1, 0.1, 2.5), 0.3, 0.9, [0.5; 3]),
        ];
        let g = rasterize(&scene, &cam, &RenderOptions::default()).unwrap().gbuffer.unwrap();
        let c = rasterize_contributions(&scene, &cam).unwrap();
        for i in 0..g.alpha.len() {
            let s: f64 = c.pixel(i).iter().map(|e| e.weight).sum();
            assert_eq!(s as f32, g.alpha[i]);
        }
    }

    #[test]
    fn tiled_matches_reference_bit_for_bit() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let cam = axis_camera(40.0, 40);
        let scene: Vec<_> = (0..80)
            .map(|_| {
                let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                GaussianPrimitive::new(
                    Vec3::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5), rng.gen_range(0.5..4.0)),
                    Vec3::new(rng.gen_range(0.01..0.4), rng.gen_range(0.01..0.4), rng.gen_range(0.01..0.4)),
                    Quat::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.gen_range(0.0..6.0)),
                    rng.gen_range(0.05..1.0),
                    dc_from_color([rng.gen(), rng.gen(), rng.gen()]),
                    TransparentAttributes::default(),
                )
                .unwrap()
            })
            .collect();
        let opts = RenderOptions { background: [0.2, 0.3, 0.4], ..Default::default() };
        let tiled = rasterize(&scene, &cam, &opts).unwrap();
        let naive = rasterize_reference(&scene, &cam, &opts).unwrap();
        assert_eq!(tiled.color.data, naive.color.data);
        assert_eq!(tiled.gbuffer, naive.gbuffer);
    }
}
