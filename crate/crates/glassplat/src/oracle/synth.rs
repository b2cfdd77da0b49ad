//! Procedural Gaussians for analytic scenes and glass spheres.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Mat3, Quat, Vec3};
use crate::oracle::scene::{AnalyticScene, Material, Shape, Texture};
use crate::primitive::{GaussianPrimitive, TransparentAttributes};
use crate::sh::dc_from_color;
use crate::shade::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthOptions {
    /// In-plane standard deviation as a fraction of the sample spacing.
    pub sigma_factor: f64,
    /// Normal-direction standard deviation as a fraction of the in-plane one.
    pub thickness: f64,
    pub opacity: f64,
    /// Uniform jitter of each sample inside its stratum, as a fraction of the spacing.
    pub jitter: f64,
    /// Sample density on checkered surfaces relative to smooth ones.
    pub detail_weight: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { sigma_factor: 0.6, thickness: 0.05, opacity: 0.95, jitter: 0.2, detail_weight: 16.0 }
    }
}

/// Glass sphere with ground-truth attributes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlassSphere {
    pub center: [f64; 3],
    pub radius: f64,
    pub ior: f64,
    #[serde(default = "white")]
    pub base_color: [f64; 3],
}

fn white() -> [f64; 3] {
    [1.0; 3]
}

impl GlassSphere {
    pub fn new(center: Vec3, radius: f64, ior: f64) -> Self {
        GlassSphere { center: center.into(), radius, ior, base_color: [1.0; 3] }
    }
}

/// Frame whose third column is `n` and first column follows `u`.
fn frame(u: &Vec3, n: &Vec3) -> Quat {
    let n = n.normalize();
    let u = (u - n * u.dot(&n)).normalize();
    let v = n.cross(&u);
    Quat::from_matrix(&Mat3::from_columns(&[u, v, n]))
}

struct Patch {
    origin: Vec3,
    u: Vec3,
    v: Vec3,
    texture: Texture,
    /// Light the texture is multiplied by.
    light: [f64; 3],
}

#[derive(Clone, Copy)]
struct Ball {
    center: Vec3,
    radius: f64,
    texture: Texture,
    light: [f64; 3],
}

fn patches(scene: &AnalyticScene) -> (Vec<Patch>, Vec<Ball>) {
    let mut quads = Vec::new();
    let mut spheres = Vec::new();
    for o in &scene.objects {
        let (texture, light) = match o.material {
            Material::Diffuse { texture } => (texture, scene.dome),
            Material::Emissive { texture } => (texture, [1.0; 3]),
            Material::Glass { .. } => continue,
        };
        let mut push = |origin: Vec3, u: Vec3, v: Vec3| {
            quads.push(Patch { origin, u, v, texture, light });
        };
        match o.shape {
            Shape::Quad { origin, edge_u, edge_v } => push(origin.into(), edge_u.into(), edge_v.into()),
            Shape::Cuboid { min, max } => {
                let (lo, hi) = (Vec3::from(min), Vec3::from(max));
                let e = hi - lo;
                let (ex, ey, ez) = (Vec3::new(e.x, 0.0, 0.0), Vec3::new(0.0, e.y, 0.0), Vec3::new(0.0, 0.0, e.z));
                // Outward faces.
                push(lo, ez, ey);
                push(lo + ex, ey, ez);
                push(lo, ex, ez);
                push(lo + ey, ez, ex);
                push(lo, ey, ex);
                push(lo + ez, ex, ey);
            }
            Shape::Sphere { center, radius } => spheres.push(Ball { center: center.into(), radius, texture, light }),
        }
    }
    (quads, spheres)
}

/// Splits `count` over `weights` by largest remainder.
fn apportion(count: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| count as f64 * w / total).collect();
    let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest: Vec<usize> = (0..weights.len()).collect();
    rest.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
    let missing = count - out.iter().sum::<usize>();
    for &i in rest.iter().take(missing) {
        out[i] += 1;
    }
    out
}

/// Points of a spherical Fibonacci lattice.
fn fibonacci_sphere(n: usize) -> impl Iterator<Item = Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n).map(move |k| {
        let y = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
        let r = (1.0 - y * y).max(0.0).sqrt();
        let a = golden * k as f64;
        Vec3::new(r * a.cos(), y, r * a.sin())
    })
}

/// Flattened Gaussians stratified over the diffuse and emissive surfaces of
/// `scene`, colored by the radiance they reflect toward any viewer.
///
/// Each quad receives a share of `count` proportional to its area (scaled by
/// `detail_weight` when checkered), laid out as a near-square grid. On
/// axis-aligned checkers the grid snaps to a whole number of samples per cell
/// so no splat straddles a color edge. The total is therefore close to but not
/// always exactly `count`. Glass objects are skipped.
pub fn synthesize_environment_gaussians(scene: &AnalyticScene, count: usize, seed: u64, opts: &SynthOptions) -> Result<Vec<GaussianPrimitive>> {
    if count == 0 {
        return Err(Error::invalid("at least one environment Gaussian is required"));
    }
    scene.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (quads, spheres) = patches(scene);
    let areas: Vec<f64> = quads
        .iter()
        .map(|q| q.u.cross(&q.v).norm() * if matches!(q.texture, Texture::Checker { .. }) { opts.detail_weight } else { 1.0 })
        .chain(spheres.iter().map(|s| 4.0 * std::f64::consts::PI * s.radius * s.radius))
        .collect();
    let shares = apportion(count, &areas);
    let mut out = Vec::with_capacity(count);
    let make = |p: Vec3, rot: Quat, su: f64, sv: f64, color: [f64; 3], n: Vec3| -> Result<GaussianPrimitive> {
        let thin = opts.thickness * su.min(sv);
        let attrs = TransparentAttributes { normal: n, ..Default::default() };
        GaussianPrimitive::new(p, Vec3::new(su, sv, thin), rot, opts.opacity, dc_from_color(color), attrs)
    };
    for (q, &share) in quads.iter().zip(&shares) {
        if share == 0 {
            continue;
        }
        let (lu, lv) = (q.u.norm(), q.v.norm());
        let h = (lu * lv / share as f64).sqrt();
        let mut nu = ((lu / h).round() as usize).max(1);
        let mut nv = ((share as f64 / nu as f64).round() as usize).max(1);
        if let Texture::Checker { cells_per_unit, .. } = q.texture {
            nu = snap_to_cells(&q.origin, &q.u, nu, cells_per_unit);
            nv = snap_to_cells(&q.origin, &q.v, nv, cells_per_unit);
        }
        let n = q.u.cross(&q.v).normalize();
        let rot = frame(&q.u, &n);
        let (su, sv) = (opts.sigma_factor * lu / nu as f64, opts.sigma_factor * lv / nv as f64);
        for j in 0..nv {
            for i in 0..nu {
                let a = (i as f64 + 0.5 + opts.jitter * (rng.gen::<f64>() - 0.5)) / nu as f64;
                let b = (j as f64 + 0.5 + opts.jitter * (rng.gen::<f64>() - 0.5)) / nv as f64;
                let p = q.origin + q.u * a + q.v * b;
                let albedo = q.texture.eval(&p);
                let color = [0, 1, 2].map(|c| albedo[c] * q.light[c]);
                out.push(make(p, rot, su, sv, color, n)?);
            }
        }
    }
    for (s, &share) in spheres.iter().zip(&shares[quads.len()..]) {
        if share == 0 {
            continue;
        }
        let Ball { center, radius, texture, light } = *s;
        let h = (4.0 * std::f64::consts::PI * radius * radius / share as f64).sqrt();
        let spin = random_rotation(&mut rng);
        for d in fibonacci_sphere(share) {
            let n = spin * d;
            let p = center + n * radius;
            let albedo = texture.eval(&p);
            let color = [0, 1, 2].map(|c| albedo[c] * light[c]);
            let rot = frame(&crate::math::any_perpendicular(&n), &n);
            let sigma = opts.sigma_factor * h;
            out.push(make(p, rot, sigma, sigma, color, n)?);
        }
    }
    Ok(out)
}

/// Rounds `n` samples along `edge` to a multiple of the checker cells it spans,
/// provided the edge is axis-aligned and starts and ends on cell boundaries.
fn snap_to_cells(origin: &Vec3, edge: &Vec3, n: usize, cells_per_unit: f64) -> usize {
    let len = edge.norm();
    let Some(axis) = (0..3).find(|&k| (edge[k].abs() - len).abs() < 1e-9 * len.max(1.0)) else { return n };
    let start = origin[axis] * cells_per_unit;
    let cells = len * cells_per_unit;
    let whole = |x: f64| (x - x.round()).abs() < 1e-6;
    if !whole(start) || !whole(cells) || cells.round() < 1.0 {
        return n;
    }
    let cells = cells.round() as usize;
    cells * (n as f64 / cells as f64).round().max(1.0) as usize
}

fn random_rotation(rng: &mut ChaCha8Rng) -> Quat {
    let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    if axis.norm() < 1e-6 {
        return Quat::identity();
    }
    Quat::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
}

/// Transparent Gaussians on a Fibonacci lattice over the sphere surface with
/// outward normals, `t = 1`, and the sphere's `η` and base color.
pub fn sphere_gaussians(sphere: &GlassSphere, count: usize, seed: u64, opts: &SynthOptions) -> Result<Vec<GaussianPrimitive>> {
    if count == 0 {
        return Err(Error::invalid("at least one sphere Gaussian is required"));
    }
    if !(sphere.radius > 0.0) {
        return Err(Error::invalid("sphere radius must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spin = random_rotation(&mut rng);
    let center = Vec3::from(sphere.center);
    let h = (4.0 * std::f64::consts::PI * sphere.radius * sphere.radius / count as f64).sqrt();
    let sigma = opts.sigma_factor * h;
    fibonacci_sphere(count)
        .map(|d| {
            let n = spin * d;
            let rot = frame(&crate::math::any_perpendicular(&n), &n);
            let attrs = TransparentAttributes::glass(n, sphere.ior, sphere.base_color);
            GaussianPrimitive::new(
                center + n * sphere.radius,
                Vec3::new(sigma, sigma, opts.thickness * sigma),
                rot,
                opts.opacity,
                dc_from_color(sphere.base_color),
                attrs,
            )
        })
        .collect()
}

/// Icosphere proxy mesh with at least one subdivision.
pub fn sphere_mesh(center: Vec3, radius: f64, subdivisions: usize) -> Result<TriangleMesh> {
    if subdivisions < 1 {
        return Err(Error::invalid("sphere mesh needs at least one subdivision"));
    }
    TriangleMesh::icosphere(center, radius, subdivisions)
}
