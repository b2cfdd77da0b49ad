//! Deferred and forward shading of transparent-object G-buffers.
//!
//! A covered pixel is split into a transparent branch
//!
//! ```text
//! C_t = α·F·L_refl + (1 − F)·L_refr ⊙ b
//! ```
//!
//! and an opaque branch `C_o = (1 − m)·b ⊙ L_amb + α·m·L_refl`, blended by a
//! smoothstep in the transparency over `[0.3, 0.7]`. Here `b` is the
//! alpha-weighted base color standing in for absorption, and `α, F, m` use the
//! pixel's alpha-normalized attributes. The result is composited over the
//! environment image with weight `1 − α`.

use rayon::prelude::*;

use crate::buffer::RgbImage;
use crate::camera::{Camera, Ray};
use crate::error::{Error, Result};
use crate::iterquery::{iter_query, iter_query_jvp, QueryOptions};
use crate::math::{from_f32, Vec3};
use crate::primitive::GaussianPrimitive;
use crate::probes::ProbeGrid;
use crate::shade::bvh::MeshBvh;
use crate::shade::optics::{fresnel_schlick, fresnel_schlick_d_eta, reflect};
use crate::shade::path::{exit_ray_d_eta, trace_transparent_path, PathFailure, RAY_OFFSET_FACTOR};
use crate::splat::{rasterize_contributions, GBuffer};

/// Pixels whose normalized blended normal is shorter than this are not shaded.
pub const MIN_NORMAL_LENGTH: f64 = 0.1;
/// Pixels with less accumulated alpha show only the environment.
pub const MIN_SHADED_ALPHA: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadeOptions {
    pub query: QueryOptions,
    /// Replace the Schlick term by a constant.
    pub fresnel_override: Option<f64>,
    /// Transparency range over which the opaque and transparent branches blend.
    pub branch_blend: (f64, f64),
    /// Tint refracted light by the blended base color. When off, refraction
    /// uses the coverage alone, which is what a white base color produces.
    pub absorption: bool,
}

impl ShadeOptions {
    pub fn new(query: QueryOptions) -> Self {
        ShadeOptions { query, fresnel_override: None, branch_blend: (0.3, 0.7), absorption: true }
    }
}

/// Inputs shared by every pixel.
#[derive(Clone, Copy)]
pub struct ShadeContext<'a> {
    pub grid: &'a ProbeGrid,
    pub bvh: &'a MeshBvh,
    pub options: ShadeOptions,
    /// Interior ray offset in world units.
    pub ray_offset: f64,
}

impl<'a> ShadeContext<'a> {
    pub fn new(grid: &'a ProbeGrid, bvh: &'a MeshBvh, options: ShadeOptions) -> Self {
        ShadeContext { grid, bvh, options, ray_offset: RAY_OFFSET_FACTOR * bvh.diagonal() }
    }
}

/// One pixel's blended attributes: raw blends `Σ wᵢ aᵢ` except `hit_point`,
/// which is already normalized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceSample {
    pub alpha: f64,
    pub normal: Vec3,
    pub hit_point: Vec3,
    pub transparency: f64,
    pub ior: f64,
    pub metallic: f64,
    pub base: [f64; 3],
}

impl SurfaceSample {
    pub fn from_gbuffer(g: &GBuffer, i: usize) -> Self {
        let b = g.base_color[i];
        SurfaceSample {
            alpha: g.alpha[i] as f64,
            normal: from_f32(g.normal[i]),
            hit_point: from_f32(g.hit_point[i]),
            transparency: g.transparency[i] as f64,
            ior: g.ior[i] as f64,
            metallic: g.metallic[i] as f64,
            base: [b[0] as f64, b[1] as f64, b[2] as f64],
        }
    }

    /// A single fully covering primitive.
    pub fn from_primitive(p: &GaussianPrimitive, hit_point: Vec3) -> Self {
        let a = &p.attrs;
        SurfaceSample {
            alpha: 1.0,
            normal: a.normal,
            hit_point,
            transparency: a.transparency,
            ior: a.ior,
            metallic: a.metallic,
            base: a.base_color,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PixelStatus {
    #[default]
    Uncovered,
    Shaded,
    InvalidNormal,
    Leak,
    DoubleTir,
}

/// Shaded pixel before compositing over the environment.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelShade {
    /// `s·C_t + (1 − s)·C_o`, premultiplied by coverage.
    pub color: [f64; 3],
    /// Reflection part of the transparent branch, `s·α·F·L_refl`.
    pub reflection: [f64; 3],
    /// Refraction part of the transparent branch, `s·(1 − F)·L_refr ⊙ b`.
    pub refraction: [f64; 3],
    pub coverage: f64,
    pub status: PixelStatus,
}

/// Partial derivatives of a pixel's color with respect to its raw blends.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelGradients {
    /// `∂C_c/∂b_c` (the Jacobian in the base color is diagonal).
    pub base: [f64; 3],
    /// `∂C/∂(Σ wᵢ tᵢ)`.
    pub transparency: [f64; 3],
    /// `∂C/∂(Σ wᵢ ηᵢ)`.
    pub ior: [f64; 3],
}

fn smoothstep(lo: f64, hi: f64, x: f64) -> (f64, f64) {
    if x <= lo {
        return (0.0, 0.0);
    }
    if x >= hi {
        return (1.0, 0.0);
    }
    let u = (x - lo) / (hi - lo);
    (u * u * (3.0 - 2.0 * u), 6.0 * u * (1.0 - u) / (hi - lo))
}

fn query(ctx: &ShadeContext, origin: Vec3, dir: Vec3) -> Result<[f64; 3]> {
    Ok(iter_query(ctx.grid, &Ray { origin, dir }, &ctx.options.query)?.color)
}

/// Shades one pixel; gradients are returned when `want_grad` is set.
pub fn shade_sample(ctx: &ShadeContext, sample: &SurfaceSample, view_dir: &Vec3, want_grad: bool) -> Result<(PixelShade, PixelGradients)> {
    let alpha = sample.alpha;
    let mut out = PixelShade::default();
    let mut grad = PixelGradients::default();
    if alpha < MIN_SHADED_ALPHA {
        return Ok((out, grad));
    }
    let n_len = sample.normal.norm() / alpha;
    if !(n_len >= MIN_NORMAL_LENGTH) {
        out.status = PixelStatus::InvalidNormal;
        return Ok((out, grad));
    }
    out.coverage = alpha;
    out.status = PixelStatus::Shaded;
    let w_in = -view_dir;
    let mut n = sample.normal.normalize();
    if n.dot(&w_in) < 0.0 {
        n = -n;
    }
    let x = sample.hit_point;
    let t_bar = sample.transparency / alpha;
    let eta = sample.ior / alpha;
    let metal = sample.metallic / alpha;
    let (s, ds) = smoothstep(ctx.options.branch_blend.0, ctx.options.branch_blend.1, t_bar);

    let w_r = reflect(&w_in, &n);
    let l_refl = query(ctx, x, w_r)?;

    let tint = if ctx.options.absorption { sample.base } else { [alpha; 3] };
    let mut c_t = [0.0; 3];
    if s > 0.0 {
        let cos = w_in.dot(&n).clamp(0.0, 1.0);
        let (f, df) = match ctx.options.fresnel_override {
            Some(f) => (f, 0.0),
            None => (fresnel_schlick(cos, 1.0, eta), fresnel_schlick_d_eta(cos, eta)),
        };
        match trace_transparent_path(ctx.bvh, &x, &n, view_dir, eta, ctx.ray_offset) {
            Ok(path) => {
                let exit = path.exit_ray();
                let (l_refr, dl_refr) = if want_grad {
                    let (dp, dd) = exit_ray_d_eta(ctx.bvh, &path, view_dir, eta, ctx.ray_offset);
                    let (r, t) = iter_query_jvp(ctx.grid, &exit, &dp, &dd, &ctx.options.query)?;
                    (r.color, t.color)
                } else {
                    (query(ctx, exit.origin, exit.dir)?, [0.0; 3])
                };
                for c in 0..3 {
                    out.reflection[c] = s * alpha * f * l_refl[c];
                    out.refraction[c] = s * (1.0 - f) * l_refr[c] * tint[c];
                    c_t[c] = alpha * f * l_refl[c] + (1.0 - f) * l_refr[c] * tint[c];
                    if want_grad {
                        if ctx.options.absorption {
                            grad.base[c] += s * (1.0 - f) * l_refr[c];
                        }
                        // ∂/∂η̄ then chain through η̄ = Σwη / α
                        let dct = alpha * df * l_refl[c] - df * l_refr[c] * tint[c] + (1.0 - f) * dl_refr[c] * tint[c];
                        grad.ior[c] = s * dct / alpha;
                    }
                }
            }
            Err(failure) => {
                out.status = match failure {
                    PathFailure::Leak => PixelStatus::Leak,
                    PathFailure::DoubleTir => PixelStatus::DoubleTir,
                };
                for c in 0..3 {
                    c_t[c] = alpha * l_refl[c];
                    out.reflection[c] = s * c_t[c];
                }
            }
        }
    }

    let mut c_o = [0.0; 3];
    if s < 1.0 {
        let l_amb = query(ctx, x, n)?;
        for c in 0..3 {
            c_o[c] = (1.0 - metal) * sample.base[c] * l_amb[c] + alpha * metal * l_refl[c];
            if want_grad {
                grad.base[c] += (1.0 - s) * (1.0 - metal) * l_amb[c];
            }
        }
    }
    for c in 0..3 {
        out.color[c] = s * c_t[c] + (1.0 - s) * c_o[c];
        if want_grad {
            grad.transparency[c] = ds * (c_t[c] - c_o[c]) / alpha;
        }
    }
    Ok((out, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ShadeDiagnostics {
    pub shaded: usize,
    pub invalid_normals: usize,
    pub leaks: usize,
    pub double_tir: usize,
}

impl ShadeDiagnostics {
    fn record(&mut self, s: PixelStatus) {
        match s {
            PixelStatus::Shaded => self.shaded += 1,
            PixelStatus::InvalidNormal => self.invalid_normals += 1,
            PixelStatus::Leak => self.leaks += 1,
            PixelStatus::DoubleTir => self.double_tir += 1,
            PixelStatus::Uncovered => {}
        }
    }

    /// Pixels shaded reflection-only because their interior path failed.
    pub fn invalid_paths(&self) -> usize {
        self.leaks + self.double_tir
    }
}

#[derive(Debug, Clone)]
pub struct ShadeOutput {
    pub image: RgbImage,
    pub reflection: RgbImage,
    pub refraction: RgbImage,
    pub diagnostics: ShadeDiagnostics,
}

fn assemble(camera: &Camera, env: &RgbImage, pixels: Vec<PixelShade>) -> ShadeOutput {
    let (w, h) = (camera.width, camera.height);
    let mut image = RgbImage::new(w, h);
    let mut reflection = RgbImage::new(w, h);
    let mut refraction = RgbImage::new(w, h);
    let mut diagnostics = ShadeDiagnostics::default();
    for (i, p) in pixels.iter().enumerate() {
        diagnostics.record(p.status);
        let e = env.data[i];
        let mut c = [0f32; 3];
        for k in 0..3 {
            c[k] = (p.color[k] + (1.0 - p.coverage) * e[k] as f64) as f32;
        }
        image.data[i] = c;
        reflection.data[i] = p.reflection.map(|v| v as f32);
        refraction.data[i] = p.refraction.map(|v| v as f32);
    }
    ShadeOutput { image, reflection, refraction, diagnostics }
}

fn check_env(camera: &Camera, env: &RgbImage) -> Result<()> {
    if env.width != camera.width || env.height != camera.height {
        return Err(Error::invalid(format!(
            "environment image is {}x{} but the camera is {}x{}",
            env.width, env.height, camera.width, camera.height
        )));
    }
    Ok(())
}

/// Shades every pixel of `gbuffer` once from its blended attributes.
pub fn shade_deferred(ctx: &ShadeContext, gbuffer: &GBuffer, camera: &Camera, env: &RgbImage) -> Result<ShadeOutput> {
    check_env(camera, env)?;
    if gbuffer.width != camera.width || gbuffer.height != camera.height {
        return Err(Error::invalid("G-buffer resolution does not match the camera"));
    }
    let pixels = (0..gbuffer.width * gbuffer.height)
        .into_par_iter()
        .map(|i| {
            let ray = camera.pixel_ray(i % camera.width, i / camera.width);
            shade_sample(ctx, &SurfaceSample::from_gbuffer(gbuffer, i), &ray.dir, false).map(|r| r.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(camera, env, pixels))
}

/// Shades each primitive separately at its own ray maximum and blends the
/// results with the splatting weights.
pub fn shade_forward(ctx: &ShadeContext, scene: &[GaussianPrimitive], camera: &Camera, env: &RgbImage) -> Result<ShadeOutput> {
    check_env(camera, env)?;
    let contrib = rasterize_contributions(scene, camera)?;
    let eye = camera.center();
    let pixels = (0..camera.width * camera.height)
        .into_par_iter()
        .map(|i| {
            let ray = camera.pixel_ray(i % camera.width, i / camera.width);
            let mut acc = PixelShade::default();
            for c in contrib.pixel(i) {
                let prim = &scene[c.index as usize];
                let sample = SurfaceSample::from_primitive(prim, eye + ray.dir * c.tau);
                let (p, _) = shade_sample(ctx, &sample, &ray.dir, false)?;
                if p.status == PixelStatus::Uncovered || p.status == PixelStatus::InvalidNormal {
                    continue;
                }
                for k in 0..3 {
                    acc.color[k] += c.weight * p.color[k];
                    acc.reflection[k] += c.weight * p.reflection[k];
                    acc.refraction[k] += c.weight * p.refraction[k];
                }
                acc.coverage += c.weight;
                if acc.status == PixelStatus::Uncovered || p.status != PixelStatus::Shaded {
                    acc.status = p.status;
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(camera, env, pixels))
}
