//! Gradient descent on per-primitive transparent attributes with frozen shapes.
//!
//! With positions, scales, rotations, and opacities fixed, each pixel's blend
//! weights are constants, so every G-buffer attribute is linear in the
//! per-primitive attributes. Gradients for base color, transparency, and IOR
//! run analytically through the shading chain; normal gradients use central
//! differences on the blended normal.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::buffer::RgbImage;
use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::fit::loss::{depth_to_normal, dssim_planes, l1_planes, loss_total, normal_terms, to_f64, LossConfig, LossTerms};
use crate::math::Vec3;
use crate::primitive::{GaussianPrimitive, TransparentAttributes};
use crate::probes::ProbeGrid;
use crate::shade::{shade_sample, MeshBvh, PixelGradients, ShadeContext, ShadeOptions, SurfaceSample};
use crate::splat::{rasterize_contributions, Contributions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Normal,
    Transparency,
    Ior,
    BaseColor,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [Attribute::Normal, Attribute::Transparency, Attribute::Ior, Attribute::BaseColor];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Normal => "normal",
            Attribute::Transparency => "transparency",
            Attribute::Ior => "ior",
            Attribute::BaseColor => "base_color",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningRates {
    pub normal: f64,
    pub transparency: f64,
    pub ior: f64,
    pub base_color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates { normal: 1e-3, transparency: 5e-3, ior: 5e-3, base_color: 1e-2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitConfig {
    pub loss: LossConfig,
    pub iterations: usize,
    pub momentum: f64,
    pub learning_rates: LearningRates,
    /// Attributes that receive updates; the rest stay at their initial values.
    pub optimize: Vec<Attribute>,
    /// Central-difference step on the blended normal, relative to its length.
    pub normal_step: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            loss: LossConfig::default(),
            iterations: 200,
            momentum: 0.9,
            learning_rates: LearningRates::default(),
            optimize: Attribute::ALL.to_vec(),
            normal_step: 1e-4,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        let lr = &self.learning_rates;
        for (name, v) in [("normal", lr.normal), ("transparency", lr.transparency), ("ior", lr.ior), ("base_color", lr.base_color)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("learning rate for {name} must be finite and ≥ 0, got {v}")));
            }
        }
        if !(self.normal_step > 0.0) {
            return Err(Error::Config(format!("normal_step must be positive, got {}", self.normal_step)));
        }
        Ok(())
    }

    fn optimizes(&self, a: Attribute) -> bool {
        self.optimize.contains(&a)
    }
}

/// One training view: a camera, the target image and silhouette, and the
/// environment image composited behind partially covered pixels.
#[derive(Debug, Clone)]
pub struct FitView {
    pub camera: Camera,
    pub target: RgbImage,
    pub silhouette: Vec<f32>,
    pub environment: RgbImage,
}

/// Loss gradient with respect to one primitive's attributes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AttributeGradient {
    pub normal: Vec3,
    pub transparency: f64,
    pub ior: f64,
    pub base_color: [f64; 3],
}

impl AttributeGradient {
    fn is_finite(&self) -> bool {
        self.normal.iter().all(|v| v.is_finite())
            && self.transparency.is_finite()
            && self.ior.is_finite()
            && self.base_color.iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub iteration: usize,
    pub total: f64,
    pub terms: LossTerms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitState {
    pub attributes: Vec<TransparentAttributes>,
    pub iteration: usize,
    pub loss_history: Vec<LossRecord>,
    velocity: Vec<AttributeGradient>,
}

impl FitState {
    pub fn new(attributes: Vec<TransparentAttributes>) -> Self {
        let velocity = vec![AttributeGradient::default(); attributes.len()];
        FitState { attributes, iteration: 0, loss_history: Vec::new(), velocity }
    }

    /// Writes the fitted attributes back onto copies of `primitives`.
    pub fn apply(&self, primitives: &[GaussianPrimitive]) -> Vec<GaussianPrimitive> {
        primitives.iter().zip(&self.attributes).map(|(p, a)| GaussianPrimitive { attrs: *a, ..p.clone() }).collect()
    }
}

/// Derivatives of one pixel's color with respect to one primitive.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelJacobian {
    /// `∂C_c/∂b_c`; the base-color Jacobian is diagonal.
    pub base_color: [f64; 3],
    pub transparency: [f64; 3],
    pub ior: [f64; 3],
    /// `normal[k][c] = ∂C_c/∂n_k`.
    pub normal: [[f64; 3]; 3],
}

/// Gradients smaller than this count as zero when forming relative errors.
pub const GRADIENT_CHECK_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientProbe {
    pub view: usize,
    pub pixel: usize,
    pub primitive: usize,
    pub component: usize,
    pub analytic: [f64; 3],
    pub finite_difference: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub attribute: Attribute,
    pub probes: usize,
    pub max_relative_error: f64,
    pub relative_errors: Vec<f64>,
    /// The probe with the largest error.
    pub worst: Option<GradientProbe>,
}

impl GradientCheck {
    pub fn fraction_within(&self, tolerance: f64) -> f64 {
        if self.relative_errors.is_empty() {
            return 1.0;
        }
        self.relative_errors.iter().filter(|&&e| e < tolerance).count() as f64 / self.relative_errors.len() as f64
    }
}

struct PreparedView {
    camera: Camera,
    contributions: Contributions,
    alpha: Vec<f64>,
    hit_point: Vec<Vec3>,
    view_dir: Vec<Vec3>,
    depth_normals: Vec<Vec3>,
    covered: Vec<bool>,
    target: Vec<[f64; 3]>,
    environment: Vec<[f64; 3]>,
    mask_loss: f64,
}

#[derive(Default, Clone, Copy)]
struct PixelEval {
    color: [f64; 3],
    grad: PixelGradients,
    /// `∂C/∂N` for the raw blended normal, `[k][c]`.
    d_normal: [[f64; 3]; 3],
}

pub struct Fitter<'a> {
    ctx: ShadeContext<'a>,
    views: Vec<PreparedView>,
    config: FitConfig,
    /// `P / Σ wᵢ` per primitive, where `P` is the total pixel count.
    precondition: Vec<f64>,
    blend_weights: Vec<f64>,
    primitive_count: usize,
}

impl<'a> Fitter<'a> {
    pub fn new(primitives: &[GaussianPrimitive], views: &[FitView], grid: &'a ProbeGrid, bvh: &'a MeshBvh, shade: ShadeOptions, config: FitConfig) -> Result<Self> {
        config.validate()?;
        if views.is_empty() {
            return Err(Error::invalid("fitting needs at least one view"));
        }
        let mut shade = shade;
        // The convergence exit is a step function of the inputs; turn it off
        // so the query is smooth in η.
        shade.query.early_exit = false;
        let ctx = ShadeContext::new(grid, bvh, shade);
        let mut prepared = Vec::with_capacity(views.len());
        let mut totals = vec![0.0; primitives.len()];
        let mut pixels = 0usize;
        for v in views {
            let cam = &v.camera;
            let n = cam.width * cam.height;
            if !v.target.same_shape(&v.environment) || v.target.width != cam.width || v.target.height != cam.height || v.silhouette.len() != n {
                return Err(Error::invalid(format!("view images do not match the {}x{} camera", cam.width, cam.height)));
            }
            let contributions = rasterize_contributions(primitives, cam)?;
            let eye = cam.center();
            let mut alpha = vec![0.0; n];
            let mut hit_point = vec![Vec3::zeros(); n];
            let mut depth = vec![f32::INFINITY; n];
            let mut view_dir = vec![Vec3::zeros(); n];
            for i in 0..n {
                let dir = cam.pixel_ray(i % cam.width, i / cam.width).dir;
                view_dir[i] = dir;
                let (mut a, mut tau) = (0.0, 0.0);
                for c in contributions.pixel(i) {
                    a += c.weight;
                    tau += c.weight * c.tau;
                    totals[c.index as usize] += c.weight;
                }
                alpha[i] = a;
                if a > 0.0 {
                    depth[i] = (tau / a) as f32;
                    hit_point[i] = eye + dir * (tau / a);
                }
            }
            let covered: Vec<bool> = alpha.iter().map(|&a| a >= crate::shade::MIN_SHADED_ALPHA).collect();
            let depth_normals = depth_to_normal(&depth, &covered, cam)?;
            let mask_loss = crate::fit::loss::loss_mask(&alpha, &v.silhouette)?;
            pixels += n;
            prepared.push(PreparedView {
                camera: cam.clone(),
                contributions,
                alpha,
                hit_point,
                view_dir,
                depth_normals,
                covered,
                target: to_f64(&v.target),
                environment: to_f64(&v.environment),
                mask_loss,
            });
        }
        let precondition = totals.iter().map(|&t| if t > 0.0 { pixels as f64 / t } else { 0.0 }).collect();
        Ok(Fitter { ctx, views: prepared, config, precondition, blend_weights: totals, primitive_count: primitives.len() })
    }

    /// Each primitive's blend weight summed over every pixel of every view.
    pub fn blend_weights(&self) -> &[f64] {
        &self.blend_weights
    }

    /// Mean of `value` over primitives weighted by [`Fitter::blend_weights`].
    /// Primitives no view sees do not count. `None` when nothing is visible.
    pub fn weighted_mean(&self, attrs: &[TransparentAttributes], value: impl Fn(&TransparentAttributes) -> f64) -> Option<f64> {
        let total: f64 = self.blend_weights.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        Some(attrs.iter().zip(&self.blend_weights).map(|(a, w)| value(a) * w).sum::<f64>() / total)
    }

    pub fn config(&self) -> &FitConfig {
        &self.config
    }

    pub fn view_count(&self) -> usize {
        self.views.len()
    }

    pub fn camera(&self, view: usize) -> &Camera {
        &self.views[view].camera
    }

    /// Pixels with enough coverage to be shaded.
    pub fn covered_pixels(&self, view: usize) -> Vec<usize> {
        (0..self.views[view].covered.len()).filter(|&i| self.views[view].covered[i]).collect()
    }

    /// Primitives blending into `pixel`, with their weights.
    pub fn contributors(&self, view: usize, pixel: usize) -> Vec<(usize, f64)> {
        self.views[view].contributions.pixel(pixel).iter().map(|c| (c.index as usize, c.weight)).collect()
    }

    fn sample(&self, v: &PreparedView, i: usize, attrs: &[TransparentAttributes]) -> SurfaceSample {
        let mut s = SurfaceSample {
            alpha: v.alpha[i],
            normal: Vec3::zeros(),
            hit_point: v.hit_point[i],
            transparency: 0.0,
            ior: 0.0,
            metallic: 0.0,
            base: [0.0; 3],
        };
        for c in v.contributions.pixel(i) {
            let a = &attrs[c.index as usize];
            let w = c.weight;
            s.normal += a.normal * w;
            s.transparency += w * a.transparency;
            s.ior += w * a.ior;
            s.metallic += w * a.metallic;
            for k in 0..3 {
                s.base[k] += w * a.base_color[k];
            }
        }
        s
    }

    fn composite(&self, v: &PreparedView, i: usize, color: [f64; 3]) -> [f64; 3] {
        let a = v.alpha[i];
        [0, 1, 2].map(|c| color[c] + (1.0 - a) * v.environment[i][c])
    }

    fn eval_pixel(&self, v: &PreparedView, i: usize, attrs: &[TransparentAttributes], want_grad: bool) -> Result<PixelEval> {
        if !v.covered[i] {
            return Ok(PixelEval { color: self.composite(v, i, [0.0; 3]), ..Default::default() });
        }
        let s = self.sample(v, i, attrs);
        let (shade, grad) = shade_sample(&self.ctx, &s, &v.view_dir[i], want_grad)?;
        let mut out = PixelEval { color: self.composite(v, i, shade.color), grad, ..Default::default() };
        if want_grad && self.config.optimizes(Attribute::Normal) {
            out.d_normal = self.normal_jacobian(v, i, &s)?;
        }
        Ok(out)
    }

    fn normal_jacobian(&self, v: &PreparedView, i: usize, s: &SurfaceSample) -> Result<[[f64; 3]; 3]> {
        let h = self.config.normal_step * s.normal.norm().max(1e-12);
        let mut out = [[0.0; 3]; 3];
        for (k, row) in out.iter_mut().enumerate() {
            let mut e = Vec3::zeros();
            e[k] = h;
            let plus = shade_sample(&self.ctx, &SurfaceSample { normal: s.normal + e, ..*s }, &v.view_dir[i], false)?.0.color;
            let minus = shade_sample(&self.ctx, &SurfaceSample { normal: s.normal - e, ..*s }, &v.view_dir[i], false)?.0.color;
            for c in 0..3 {
                row[c] = (plus[c] - minus[c]) / (2.0 * h);
            }
        }
        Ok(out)
    }

    /// Final composited color of one pixel.
    pub fn render_pixel(&self, view: usize, pixel: usize, attrs: &[TransparentAttributes]) -> Result<[f64; 3]> {
        self.check_attrs(attrs)?;
        Ok(self.eval_pixel(&self.views[view], pixel, attrs, false)?.color)
    }

    pub fn render_view(&self, view: usize, attrs: &[TransparentAttributes]) -> Result<RgbImage> {
        self.check_attrs(attrs)?;
        let v = &self.views[view];
        let data = (0..v.alpha.len())
            .into_par_iter()
            .map(|i| self.eval_pixel(v, i, attrs, false).map(|e| e.color.map(|x| x as f32)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RgbImage { width: v.camera.width, height: v.camera.height, data })
    }

    /// Analytic (and, for the normal, central-difference) derivatives of a
    /// pixel's color with respect to one primitive's attributes.
    pub fn pixel_jacobian(&self, view: usize, pixel: usize, attrs: &[TransparentAttributes], primitive: usize) -> Result<PixelJacobian> {
        self.check_attrs(attrs)?;
        let v = &self.views[view];
        let w: f64 = v.contributions.pixel(pixel).iter().filter(|c| c.index as usize == primitive).map(|c| c.weight).sum();
        let mut j = PixelJacobian::default();
        if w == 0.0 || !v.covered[pixel] {
            return Ok(j);
        }
        let s = self.sample(v, pixel, attrs);
        let (_, g) = shade_sample(&self.ctx, &s, &v.view_dir[pixel], true)?;
        let dn = self.normal_jacobian(v, pixel, &s)?;
        for c in 0..3 {
            j.base_color[c] = w * g.base[c];
            j.transparency[c] = w * g.transparency[c];
            j.ior[c] = w * g.ior[c];
            for k in 0..3 {
                j.normal[k][c] = w * dn[k][c];
            }
        }
        Ok(j)
    }

    /// Compares [`Fitter::pixel_jacobian`] against central differences of
    /// [`Fitter::render_pixel`] on `probes` random (pixel, primitive,
    /// component) triples. `step` is absolute: every attribute lives on a
    /// unit-order scale.
    pub fn check_gradients(&self, attrs: &[TransparentAttributes], attribute: Attribute, probes: usize, seed: u64, step: f64) -> Result<GradientCheck> {
        self.check_attrs(attrs)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let covered: Vec<Vec<usize>> = (0..self.views.len()).map(|v| self.covered_pixels(v)).collect();
        if covered.iter().all(|c| c.is_empty()) {
            return Err(Error::invalid("no covered pixels to probe"));
        }
        let mut out = GradientCheck { attribute, probes: 0, max_relative_error: 0.0, relative_errors: Vec::with_capacity(probes), worst: None };
        while out.probes < probes {
            let view = rng.gen_range(0..self.views.len());
            let Some(&pixel) = covered[view].choose(&mut rng) else { continue };
            let list = self.views[view].contributions.pixel(pixel);
            let primitive = list[rng.gen_range(0..list.len())].index as usize;
            let k = rng.gen_range(0..3);
            let j = self.pixel_jacobian(view, pixel, attrs, primitive)?;
            let analytic = match attribute {
                Attribute::Normal => j.normal[k],
                Attribute::Transparency => j.transparency,
                Attribute::Ior => j.ior,
                Attribute::BaseColor => {
                    let mut d = [0.0; 3];
                    d[k] = j.base_color[k];
                    d
                }
            };
            let at = |delta: f64| -> Result<[f64; 3]> {
                let mut a = attrs.to_vec();
                let p = &mut a[primitive];
                match attribute {
                    Attribute::Normal => p.normal[k] += delta,
                    Attribute::Transparency => p.transparency += delta,
                    Attribute::Ior => p.ior += delta,
                    Attribute::BaseColor => p.base_color[k] += delta,
                }
                self.render_pixel(view, pixel, &a)
            };
            let (plus, minus) = (at(step)?, at(-step)?);
            let fd = [0, 1, 2].map(|c| (plus[c] - minus[c]) / (2.0 * step));
            let scale = analytic.iter().chain(&fd).fold(GRADIENT_CHECK_FLOOR, |m, v| m.max(v.abs()));
            let err = (0..3).map(|c| (analytic[c] - fd[c]).abs()).fold(0.0, f64::max) / scale;
            if err > out.max_relative_error || out.worst.is_none() {
                out.max_relative_error = err;
                out.worst = Some(GradientProbe { view, pixel, primitive, component: k, analytic, finite_difference: fd });
            }
            out.relative_errors.push(err);
            out.probes += 1;
        }
        Ok(out)
    }

    fn check_attrs(&self, attrs: &[TransparentAttributes]) -> Result<()> {
        if attrs.len() != self.primitive_count {
            return Err(Error::invalid(format!("{} attribute sets for {} primitives", attrs.len(), self.primitive_count)));
        }
        Ok(())
    }

    /// Loss averaged over views and, when `want_grad` is set, the
    /// preconditioned per-primitive gradient.
    pub fn evaluate(&self, attrs: &[TransparentAttributes], want_grad: bool) -> Result<(LossTerms, Vec<AttributeGradient>)> {
        self.check_attrs(attrs)?;
        let cfg = &self.config.loss;
        let taps = cfg.taps();
        let scale = 1.0 / self.views.len() as f64;
        let mut terms = LossTerms::default();
        let mut grads = if want_grad { vec![AttributeGradient::default(); attrs.len()] } else { Vec::new() };
        for (vi, v) in self.views.iter().enumerate() {
            let evals = (0..v.alpha.len())
                .into_par_iter()
                .map(|i| self.eval_pixel(v, i, attrs, want_grad))
                .collect::<Result<Vec<_>>>()?;
            let image: Vec<[f64; 3]> = evals.iter().map(|e| e.color).collect();
            let normals: Vec<Vec3> = (0..v.alpha.len()).map(|i| if v.covered[i] { self.sample(v, i, attrs).normal } else { Vec3::zeros() }).collect();
            let (l1, g_l1) = l1_planes(&image, &v.target, want_grad);
            let (dssim, g_dssim) = dssim_planes(&image, &v.target, v.camera.width, v.camera.height, &taps, want_grad);
            let (normal, g_normal) = normal_terms(&normals, &v.depth_normals, &v.covered, want_grad);
            terms.add_scaled(&LossTerms { l1, dssim, normal, mask: v.mask_loss }, scale);
            if !want_grad {
                continue;
            }
            for (i, e) in evals.iter().enumerate() {
                if !v.covered[i] {
                    continue;
                }
                let up = [0, 1, 2].map(|c| scale * ((1.0 - cfg.lambda_dssim) * g_l1[i][c] + cfg.lambda_dssim * g_dssim[i][c]));
                let dot = |d: &[f64; 3]| up[0] * d[0] + up[1] * d[1] + up[2] * d[2];
                let g = &e.grad;
                let mut pixel = AttributeGradient {
                    transparency: dot(&g.transparency),
                    ior: dot(&g.ior),
                    base_color: [0, 1, 2].map(|c| up[c] * g.base[c]),
                    normal: Vec3::from_fn(|k, _| dot(&e.d_normal[k])) + g_normal[i] * (scale * cfg.lambda_normal),
                };
                if !self.config.optimizes(Attribute::Normal) {
                    pixel.normal = Vec3::zeros();
                }
                if !pixel.is_finite() || e.color.iter().any(|c| !c.is_finite()) {
                    return Err(self.nan_error(vi, i, &pixel));
                }
                for c in v.contributions.pixel(i) {
                    let dst = &mut grads[c.index as usize];
                    let w = c.weight;
                    dst.transparency += w * pixel.transparency;
                    dst.ior += w * pixel.ior;
                    dst.normal += pixel.normal * w;
                    for k in 0..3 {
                        dst.base_color[k] += w * pixel.base_color[k];
                    }
                }
            }
        }
        for (g, &p) in grads.iter_mut().zip(&self.precondition) {
            g.transparency *= p;
            g.ior *= p;
            g.normal *= p;
            g.base_color = g.base_color.map(|b| b * p);
        }
        Ok((terms, grads))
    }

    fn nan_error(&self, view: usize, pixel: usize, g: &AttributeGradient) -> Error {
        let attribute = if g.base_color.iter().any(|v| !v.is_finite()) {
            Attribute::BaseColor
        } else if !g.transparency.is_finite() {
            Attribute::Transparency
        } else if !g.ior.is_finite() {
            Attribute::Ior
        } else if g.normal.iter().any(|v| !v.is_finite()) {
            Attribute::Normal
        } else {
            // color itself went non-finite; IOR feeds every refraction term
            Attribute::Ior
        };
        let w = self.views[view].camera.width;
        Error::NanGradient { attribute: attribute.name(), view, x: pixel % w, y: pixel / w }
    }

    /// Evaluates the loss at the current attributes, records it, and takes one
    /// momentum step.
    pub fn step(&self, state: &mut FitState) -> Result<LossRecord> {
        let (terms, grads) = self.evaluate(&state.attributes, true)?;
        let record = LossRecord { iteration: state.iteration, total: loss_total(&terms, &self.config.loss), terms };
        let beta = self.config.momentum;
        let lr = &self.config.learning_rates;
        let on = |a: Attribute, rate: f64| self.config.optimizes(a) && rate != 0.0;
        for ((attr, vel), g) in state.attributes.iter_mut().zip(state.velocity.iter_mut()).zip(&grads) {
            vel.normal = vel.normal * beta + g.normal;
            vel.transparency = beta * vel.transparency + g.transparency;
            vel.ior = beta * vel.ior + g.ior;
            for c in 0..3 {
                vel.base_color[c] = beta * vel.base_color[c] + g.base_color[c];
            }
            if on(Attribute::Normal, lr.normal) {
                let n = attr.normal - vel.normal * lr.normal;
                let len = n.norm();
                if len > 1e-12 {
                    attr.normal = n / len;
                }
            }
            if on(Attribute::Transparency, lr.transparency) {
                attr.transparency = (attr.transparency - lr.transparency * vel.transparency).clamp(0.0, 1.0);
            }
            if on(Attribute::Ior, lr.ior) {
                attr.ior = (attr.ior - lr.ior * vel.ior).clamp(crate::primitive::IOR_MIN, crate::primitive::IOR_MAX);
            }
            if on(Attribute::BaseColor, lr.base_color) {
                for c in 0..3 {
                    attr.base_color[c] = (attr.base_color[c] - lr.base_color * vel.base_color[c]).clamp(0.0, 1.0);
                }
            }
        }
        state.iteration += 1;
        state.loss_history.push(record);
        Ok(record)
    }

    /// Runs `iterations` steps, calling `progress` after each.
    pub fn run(&self, state: &mut FitState, iterations: usize, mut progress: impl FnMut(&LossRecord)) -> Result<()> {
        for _ in 0..iterations {
            let r = self.step(state)?;
            progress(&r);
        }
        Ok(())
    }
}

/// Fits the attributes of `primitives` to `views` for `config.iterations` steps.
pub fn fit_attributes(
    primitives: &[GaussianPrimitive],
    views: &[FitView],
    grid: &ProbeGrid,
    bvh: &MeshBvh,
    shade: ShadeOptions,
    config: &FitConfig,
) -> Result<FitState> {
    let fitter = Fitter::new(primitives, views, grid, bvh, shade, config.clone())?;
    let mut state = FitState::new(primitives.iter().map(|p| p.attrs).collect());
    fitter.run(&mut state, config.iterations, |_| {})?;
    Ok(state)
}
