//! Reference renderer for [`AnalyticScene`]s.
//!
//! Diffuse surfaces return `albedo ⊙ dome`; glass splits at the entry into a
//! Fresnel-weighted mirror ray and a transmitted ray that refracts twice with
//! at most one internal reflection, attenuated by `exp(−σ d)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::buffer::RgbImage;
use crate::camera::{Camera, Ray};
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::oracle::scene::{AnalyticScene, Material, Shape};
use crate::panorama::{pixel_to_direction, Panorama, MISS};
use crate::probes::{place_probes, Aabb, Probe, ProbeGrid};
use crate::shade::optics::{fresnel_schlick, reflect, refract};

/// Offset for rays leaving a surface.
const SURFACE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceOptions {
    /// Also weight the transmitted ray by `1 − F` at the exit interface.
    pub exit_fresnel: bool,
    /// Maximum number of glass interactions along one camera path.
    pub max_depth: usize,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions { exit_fresnel: false, max_depth: 4 }
    }
}

/// Interior path through a glass solid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlassPath {
    pub exit: Ray,
    pub length: f64,
    pub tir_count: usize,
    /// Cosine of the transmitted angle outside the exit surface.
    pub exit_cos: f64,
}

/// Follows a ray refracted into `shape` at `entry` out the other side.
/// Returns `None` on a second total internal reflection.
pub fn glass_path(shape: &Shape, entry: &Vec3, inside_dir: &Vec3, ior: f64) -> Option<GlassPath> {
    let mut start = *entry;
    let mut dir = *inside_dir;
    let mut length = 0.0;
    let mut tir_count = 0;
    loop {
        let (t, n_out) = shape.exit(&Ray { origin: start, dir })?;
        let p = start + dir * t;
        length += t;
        match refract(&-dir, &-n_out, ior) {
            Some(out) => {
                let out = out.normalize();
                return Some(GlassPath { exit: Ray { origin: p, dir: out }, length, tir_count, exit_cos: out.dot(&n_out) });
            }
            None => {
                tir_count += 1;
                if tir_count > 1 {
                    return None;
                }
                dir = reflect(&-dir, &-n_out);
                start = p;
            }
        }
    }
}

/// Radiance arriving at `ray.origin` from direction `-ray.dir`.
pub fn radiance(scene: &AnalyticScene, ray: &Ray, opts: &TraceOptions) -> [f64; 3] {
    radiance_depth(scene, ray, opts, 0)
}

fn radiance_depth(scene: &AnalyticScene, ray: &Ray, opts: &TraceOptions, depth: usize) -> [f64; 3] {
    let Some(hit) = scene.intersect(ray, SURFACE_EPS) else { return scene.dome };
    let obj = &scene.objects[hit.object];
    match obj.material {
        Material::Diffuse { texture } => {
            let a = texture.eval(&hit.point);
            [0, 1, 2].map(|c| a[c] * scene.dome[c])
        }
        Material::Emissive { texture } => texture.eval(&hit.point),
        Material::Glass { ior, sigma, tint } => {
            if depth >= opts.max_depth {
                return [0.0; 3];
            }
            let w_in = -ray.dir;
            let n = if hit.normal.dot(&w_in) >= 0.0 { hit.normal } else { -hit.normal };
            let cos = w_in.dot(&n).clamp(0.0, 1.0);
            let f = fresnel_schlick(cos, 1.0, ior);
            let l_refl = radiance_depth(scene, &Ray { origin: hit.point, dir: reflect(&w_in, &n) }, opts, depth + 1);
            let inside = refract(&w_in, &n, 1.0 / ior).map(|d| d.normalize());
            let path = inside.and_then(|d| glass_path(&obj.shape, &hit.point, &d, ior));
            let Some(path) = path else {
                // Reflection only, as the deferred shader does for failed paths.
                return l_refl;
            };
            let l_refr = radiance_depth(scene, &path.exit, opts, depth + 1);
            let t_exit = if opts.exit_fresnel { 1.0 - fresnel_schlick(path.exit_cos, 1.0, ior) } else { 1.0 };
            [0, 1, 2].map(|c| f * l_refl[c] + (1.0 - f) * t_exit * tint[c] * (-sigma[c] * path.length).exp() * l_refr[c])
        }
    }
}

/// Distance to the first surface along `ray`, if any.
pub fn first_hit_distance(scene: &AnalyticScene, ray: &Ray) -> Option<f64> {
    scene.intersect(ray, SURFACE_EPS).map(|h| h.t)
}

/// Renders `spp` samples per pixel. One sample uses the pixel center; more use
/// jittered strata of a `⌈√spp⌉²` grid, seeded per pixel from `seed`.
pub fn path_trace(scene: &AnalyticScene, camera: &Camera, spp: usize, seed: u64, opts: &TraceOptions) -> Result<RgbImage> {
    if spp == 0 {
        return Err(Error::invalid("path tracing needs at least one sample per pixel"));
    }
    scene.validate()?;
    let (w, h) = (camera.width, camera.height);
    let m = (spp as f64).sqrt().ceil() as usize;
    let data: Vec<[f32; 3]> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let mut acc = [0.0; 3];
            if spp == 1 {
                acc = radiance(scene, &camera.pixel_ray(x, y), opts);
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                for k in 0..spp {
                    let (sx, sy) = ((k % m) as f64, ((k / m) % m) as f64);
                    let px = x as f64 + (sx + rng.gen::<f64>()) / m as f64;
                    let py = y as f64 + (sy + rng.gen::<f64>()) / m as f64;
                    let l = radiance(scene, &camera.ray_through(px, py), opts);
                    for c in 0..3 {
                        acc[c] += l[c];
                    }
                }
                acc = acc.map(|v| v / spp as f64);
            }
            acc.map(|v| v as f32)
        })
        .collect();
    Ok(RgbImage { width: w, height: h, data })
}

/// Per-pixel coverage of glass objects, measured at pixel centers.
pub fn glass_silhouette(scene: &AnalyticScene, camera: &Camera) -> Vec<f32> {
    (0..camera.width * camera.height)
        .into_par_iter()
        .map(|i| {
            let ray = camera.pixel_ray(i % camera.width, i / camera.width);
            match scene.intersect(&ray, SURFACE_EPS) {
                Some(hit) if matches!(scene.objects[hit.object].material, Material::Glass { .. }) => 1.0,
                _ => 0.0,
            }
        })
        .collect()
}

/// Exact first-hit color and Euclidean distance per panorama pixel center.
pub fn analytic_panorama(scene: &AnalyticScene, center: &Vec3, height: usize) -> Result<Panorama> {
    if height == 0 {
        return Err(Error::invalid("panorama height must be positive"));
    }
    let opts = TraceOptions::default();
    let mut pano = Panorama::empty(height);
    let w = pano.width;
    let texels: Vec<([f32; 3], f32)> = (0..w * height)
        .into_par_iter()
        .map(|i| {
            let d = pixel_to_direction((i % w) as f64 + 0.5, (i / w) as f64 + 0.5, w, height);
            let ray = Ray { origin: *center, dir: d };
            let c = radiance(scene, &ray, &opts).map(|v| v as f32);
            let depth = first_hit_distance(scene, &ray).map_or(MISS, |t| t as f32);
            (c, depth)
        })
        .collect();
    for (i, (c, d)) in texels.into_iter().enumerate() {
        pano.color[i] = c;
        pano.depth[i] = d;
    }
    Ok(pano)
}

/// Probe grid whose panoramas come from [`analytic_panorama`].
pub fn bake_analytic(scene: &AnalyticScene, bbox: &Aabb, dims: [usize; 3], margin: f64, height: usize) -> Result<ProbeGrid> {
    let positions = place_probes(bbox, dims, margin)?;
    let probes = positions
        .iter()
        .map(|p| analytic_panorama(scene, p, height).map(|pano| Probe::new(*p, pano)))
        .collect::<Result<Vec<_>>>()?;
    ProbeGrid::from_parts(bbox.inflate(margin), dims, probes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::scene::Texture;
    use crate::panorama::direction_to_texel;

    fn camera() -> Camera {
        Camera::look_at(Vec3::new(0.3, 0.8, -1.8), Vec3::new(0.0, -0.3, 0.0), Vec3::y(), 60.0, 48, 40).unwrap()
    }

    #[test]
    fn diffuse_only_is_albedo_times_dome() {
        let mut room = AnalyticScene::checker_room();
        room.dome = [0.5, 1.0, 2.0];
        let cam = camera();
        let img = path_trace(&room, &cam, 1, 0, &TraceOptions::default()).unwrap();
        for (i, px) in img.data.iter().enumerate() {
            let ray = cam.pixel_ray(i % cam.width, i / cam.width);
            let hit = room.intersect(&ray, 0.0).unwrap();
            let Material::Diffuse { texture } = room.objects[hit.object].material else { unreachable!() };
            let a = texture.eval(&hit.point);
            for c in 0..3 {
                assert_eq!(px[c], (a[c] * room.dome[c]) as f32);
            }
        }
    }

    #[test]
    fn index_matched_glass_is_invisible() {
        let room = AnalyticScene::checker_room();
        let glass = room.clone().with_glass_sphere(Vec3::new(0.0, -0.3, 0.0), 0.5, 1.0, [0.0; 3]);
        let cam = camera();
        let a = path_trace(&room, &cam, 1, 0, &TraceOptions::default()).unwrap();
        let b = path_trace(&glass, &cam, 1, 0, &TraceOptions::default()).unwrap();
        let max = a.data.iter().zip(&b.data).flat_map(|(p, q)| (0..3).map(move |c| (p[c] - q[c]).abs())).fold(0f32, f32::max);
        assert!(max < 1e-6, "{max}");
    }

    #[test]
    fn absorption_darkens_monotonically() {
        let cam = camera();
        let opts = TraceOptions::default();
        let room = AnalyticScene::checker_room();
        let slab = |s: f64| {
            room.clone().with_object(
                Shape::cuboid(Vec3::new(-0.6, -0.9, -0.6), Vec3::new(0.6, -0.6, 0.6)),
                Material::Glass { ior: 1.5, sigma: [s, 2.0 * s, 0.5 * s], tint: [1.0; 3] },
            )
        };
        let imgs: Vec<RgbImage> = [0.0, 0.5, 1.0, 2.0].iter().map(|&s| path_trace(&slab(s), &cam, 1, 0, &opts).unwrap()).collect();
        let mut darker = 0;
        for pair in imgs.windows(2) {
            for (p, q) in pair[0].data.iter().zip(&pair[1].data) {
                for c in 0..3 {
                    assert!(q[c] <= p[c], "{q:?} > {p:?}");
                    darker += (q[c] < p[c]) as usize;
                }
            }
        }
        assert!(darker > 100);
    }

    #[test]
    fn box_glass_reflects_internally_once() {
        // Grazing entry on the top face of a tall box reaches a side wall beyond
        // the critical angle, reflects, and leaves through the bottom.
        let shape = Shape::cuboid(Vec3::new(-1.0, -1.0, -1.0), Vec3::new(1.0, 1.0, 1.0));
        let w_in = Vec3::new(-80f64.to_radians().sin(), 80f64.to_radians().cos(), 0.0);
        let inside = refract(&w_in, &Vec3::y(), 1.0 / 1.5).unwrap();
        let path = glass_path(&shape, &Vec3::new(0.5, 1.0, 0.0), &inside, 1.5).unwrap();
        assert_eq!(path.tir_count, 1);
        assert!((path.exit.origin.y + 1.0).abs() < 1e-12);
        // The bottom exit mirrors the entry angle about the side wall.
        assert!((path.exit.dir.y + w_in.y).abs() < 1e-12);
    }

    #[test]
    fn specular_pixels_match_across_sample_counts() {
        // With a uniform dome and no absorption every glass path returns the
        // dome radiance regardless of where the pixel is sampled.
        let scene = AnalyticScene { objects: vec![], dome: [0.7, 0.4, 0.2] }.with_glass_sphere(Vec3::zeros(), 1.0, 1.5, [0.0; 3]);
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, -4.0), Vec3::zeros(), Vec3::y(), 30.0, 16, 16).unwrap();
        let a = path_trace(&scene, &cam, 1, 3, &TraceOptions::default()).unwrap();
        let b = path_trace(&scene, &cam, 64, 3, &TraceOptions::default()).unwrap();
        for (p, q) in a.data.iter().zip(&b.data) {
            for c in 0..3 {
                assert!((p[c] - q[c]).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn room_panorama_depths() {
        let room = AnalyticScene::box_room(Vec3::repeat(-1.0), Vec3::repeat(1.0));
        let pano = analytic_panorama(&room, &Vec3::zeros(), 32).unwrap();
        let (c, r) = direction_to_texel(&Vec3::z(), 64, 32);
        let i = pano.index(c, r);
        // Texel centers sit half a texel off the axis.
        assert!((pano.depth[i] - 1.0).abs() < 0.01, "{}", pano.depth[i]);

        let sphere_room = AnalyticScene {
            objects: vec![crate::oracle::scene::SceneObject {
                shape: Shape::sphere(Vec3::zeros(), 3.0),
                material: Material::Diffuse { texture: Texture::Constant { color: [0.5; 3] } },
            }],
            dome: [1.0; 3],
        };
        let pano = analytic_panorama(&sphere_room, &Vec3::zeros(), 16).unwrap();
        assert!(pano.depth.iter().all(|&d| (d - 3.0).abs() < 1e-6));
    }

    #[test]
    fn adjacent_probe_depths_obey_triangle_inequality() {
        let room = AnalyticScene::checker_room();
        let (pa, pb) = (Vec3::new(-0.5, 0.0, -0.5), Vec3::new(0.5, 0.2, 0.4));
        let a = analytic_panorama(&room, &pa, 32).unwrap();
        for i in (0..a.depth.len()).step_by(7) {
            let d = pixel_to_direction((i % 64) as f64 + 0.5, (i / 64) as f64 + 0.5, 64, 32);
            let x = pa + d * a.depth[i] as f64;
            let to_x = x - pb;
            let tb = first_hit_distance(&room, &Ray { origin: pb, dir: to_x.normalize() }).unwrap();
            assert!((tb - a.depth[i] as f64).abs() <= (pa - pb).norm() + 1e-5);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let scene = AnalyticScene::checker_room().with_glass_sphere(Vec3::new(0.0, -0.3, 0.0), 0.5, 1.5, [0.0; 3]);
        let cam = camera();
        let a = path_trace(&scene, &cam, 4, 11, &TraceOptions::default()).unwrap();
        let b = path_trace(&scene, &cam, 4, 11, &TraceOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
