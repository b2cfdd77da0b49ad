//! End-to-end stages driven by a [`ConfigDocument`]: scene synthesis, probe
//! baking, rendering, and attribute fitting, plus their file layouts.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::Serialize;

use crate::buffer::RgbImage;
use crate::camera::Camera;
use crate::config::{self, ConfigDocument};
use crate::error::{Error, Result};
use crate::fit::{loss_total, FitState, FitView, Fitter, LossRecord};
use crate::metrics::{psnr, ssim};
use crate::oracle::{glass_silhouette, path_trace, sphere_gaussians, sphere_mesh, synthesize_environment_gaussians};
use crate::ply::{read_ply, write_ply};
use crate::primitive::GaussianPrimitive;
use crate::probes::{Aabb, ProbeGrid};
use crate::shade::{shade_deferred, shade_forward, MeshBvh, ShadeContext, ShadeOutput, TriangleMesh};
use crate::splat::{rasterize, Channels, GBuffer, RenderOptions};

/// Seed offsets so the stages draw independent streams from one config seed.
const OBJECT_SEED: u64 = 0x0b1e_c700;
const ORACLE_SEED: u64 = 0x0ac1_e000;

pub struct SceneAssets {
    pub environment: Vec<GaussianPrimitive>,
    pub object: Vec<GaussianPrimitive>,
    pub proxy: TriangleMesh,
}

pub fn synthesize(cfg: &ConfigDocument) -> Result<SceneAssets> {
    cfg.validate()?;
    let s = &cfg.scene;
    let environment = synthesize_environment_gaussians(&cfg.environment_scene(), s.environment_count, cfg.seed, &s.environment_synth)?;
    let object = synthesize_object(cfg)?;
    let proxy = sphere_mesh(s.sphere.center.into(), s.sphere.radius, s.mesh_subdivisions)?;
    Ok(SceneAssets { environment, object, proxy })
}

/// Splats for the config's glass sphere, with its ground-truth attributes.
pub fn synthesize_object(cfg: &ConfigDocument) -> Result<Vec<GaussianPrimitive>> {
    let s = &cfg.scene;
    sphere_gaussians(&s.sphere, s.object_count, cfg.seed ^ OBJECT_SEED, &s.object_synth)
}

/// Writes the environment PLY, object PLY, proxy OBJ and resolved config into
/// the output directory and returns their paths in that order.
pub fn write_scene(cfg: &ConfigDocument, assets: &SceneAssets) -> Result<[PathBuf; 4]> {
    fs::create_dir_all(&cfg.output.dir)?;
    let paths = [config::ENVIRONMENT_PLY, config::OBJECT_PLY, config::PROXY_OBJ, config::RESOLVED_CONFIG].map(|n| cfg.output_path(n));
    write_ply(&paths[0], &assets.environment)?;
    write_ply(&paths[1], &assets.object)?;
    assets.proxy.write_obj(&paths[2])?;
    cfg.save(&paths[3])?;
    Ok(paths)
}

/// Reads a stage input, turning a missing file into an error that names the
/// command producing it.
pub fn require(path: &Path, producer: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingInput { path: path.to_path_buf(), hint: format!("run `glassplat {producer}` first") })
    }
}

pub fn load_primitives(path: &Path, producer: &str) -> Result<Vec<GaussianPrimitive>> {
    require(path, producer)?;
    read_ply(path)
}

pub fn load_proxy(path: &Path) -> Result<TriangleMesh> {
    require(path, "synth")?;
    TriangleMesh::read_obj(path)
}

pub fn load_atlas(path: &Path) -> Result<ProbeGrid> {
    require(path, "bake")?;
    ProbeGrid::load_atlas(path)
}

/// Bounding box of the object's Gaussian centers.
pub fn object_bounds(object: &[GaussianPrimitive]) -> Result<Aabb> {
    Aabb::from_points(object.iter().map(|p| &p.position)).ok_or_else(|| Error::invalid("the object has no primitives to place probes around"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BakeSummary {
    pub probes: usize,
    pub dims: [usize; 3],
    pub panorama_width: usize,
    pub panorama_height: usize,
    pub environment_primitives: usize,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    pub seconds: f64,
}

/// Bakes the environment into probes around the object. An empty environment
/// gives a grid whose every texel is a miss.
pub fn bake(cfg: &ConfigDocument, environment: &[GaussianPrimitive], object: &[GaussianPrimitive]) -> Result<(ProbeGrid, BakeSummary)> {
    let start = Instant::now();
    let p = &cfg.probes;
    let grid = ProbeGrid::bake(environment, &object_bounds(object)?, p.dims, p.margin, p.panorama_height)?;
    let summary = BakeSummary {
        probes: grid.probes.len(),
        dims: grid.dims,
        panorama_width: 2 * grid.panorama_height(),
        panorama_height: grid.panorama_height(),
        environment_primitives: environment.len(),
        bbox_min: grid.bbox.min.into(),
        bbox_max: grid.bbox.max.into(),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((grid, summary))
}

/// Color-only splat render of the environment.
pub fn render_environment(environment: &[GaussianPrimitive], camera: &Camera, background: [f64; 3]) -> Result<RgbImage> {
    let opts = RenderOptions { channels: Channels::ColorOnly, background: background.map(|c| c as f32), ..Default::default() };
    Ok(rasterize(environment, camera, &opts)?.color)
}

pub fn object_gbuffer(object: &[GaussianPrimitive], camera: &Camera) -> Result<GBuffer> {
    Ok(rasterize(object, camera, &RenderOptions::default())?.gbuffer.expect("full render carries a G-buffer"))
}

pub struct RenderProducts {
    pub environment: RgbImage,
    pub gbuffer: GBuffer,
    pub shade: ShadeOutput,
}

impl RenderProducts {
    pub fn image(&self) -> &RgbImage {
        &self.shade.image
    }
}

/// Renders the object over the environment with deferred or forward shading
/// as the config selects.
pub fn render(cfg: &ConfigDocument, camera: &Camera, grid: &ProbeGrid, bvh: &MeshBvh, object: &[GaussianPrimitive], environment: &RgbImage) -> Result<RenderProducts> {
    if environment.width != camera.width || environment.height != camera.height {
        return Err(Error::invalid(format!(
            "environment image is {}x{} but the camera is {}x{}",
            environment.width, environment.height, camera.width, camera.height
        )));
    }
    let ctx = ShadeContext::new(grid, bvh, cfg.shade_options(grid));
    let gbuffer = object_gbuffer(object, camera)?;
    let shade = if cfg.shading.deferred {
        shade_deferred(&ctx, &gbuffer, camera, environment)?
    } else {
        shade_forward(&ctx, object, camera, environment)?
    };
    Ok(RenderProducts { environment: environment.clone(), gbuffer, shade })
}

/// Path-traced reference of the configured scene.
pub fn oracle_image(cfg: &ConfigDocument, camera: &Camera, spp: usize) -> Result<RgbImage> {
    path_trace(&cfg.analytic_scene(), camera, spp, cfg.seed ^ ORACLE_SEED, &cfg.trace_options())
}

/// Images a render can dump besides the final color.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RenderChannel {
    Color,
    Environment,
    /// Blended normal mapped to `0.5 n + 0.5`.
    Normal,
    HitPoint,
    Depth,
    Alpha,
    Transparency,
    Ior,
    BaseColor,
    /// Light passing the object: `1 − α`.
    Transmittance,
    Reflection,
    Refraction,
}

impl RenderChannel {
    pub const ALL: [RenderChannel; 12] = [
        RenderChannel::Color,
        RenderChannel::Environment,
        RenderChannel::Normal,
        RenderChannel::HitPoint,
        RenderChannel::Depth,
        RenderChannel::Alpha,
        RenderChannel::Transparency,
        RenderChannel::Ior,
        RenderChannel::BaseColor,
        RenderChannel::Transmittance,
        RenderChannel::Reflection,
        RenderChannel::Refraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RenderChannel::Color => "color",
            RenderChannel::Environment => "environment",
            RenderChannel::Normal => "normal",
            RenderChannel::HitPoint => "hit_point",
            RenderChannel::Depth => "depth",
            RenderChannel::Alpha => "alpha",
            RenderChannel::Transparency => "transparency",
            RenderChannel::Ior => "ior",
            RenderChannel::BaseColor => "base_color",
            RenderChannel::Transmittance => "transmittance",
            RenderChannel::Reflection => "reflection",
            RenderChannel::Refraction => "refraction",
        }
    }
}

impl FromStr for RenderChannel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RenderChannel::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| {
            let names: Vec<_> = RenderChannel::ALL.iter().map(|c| c.name()).collect();
            Error::invalid(format!("unknown channel `{s}`; expected one of {}", names.join(", ")))
        })
    }
}

/// One channel as a linear image. Material maps are normalized by alpha so
/// they show the blended attribute rather than its premultiplied sum.
pub fn channel_image(products: &RenderProducts, channel: RenderChannel) -> RgbImage {
    let g = &products.gbuffer;
    let (w, h) = (g.width, g.height);
    let scalar = |v: &[f32], normalize: bool| {
        RgbImage::from_fn(w, h, |x, y| {
            let i = y * w + x;
            let a = g.alpha[i];
            let s = if normalize { if a > 0.0 { v[i] / a } else { 0.0 } } else { v[i] };
            [s; 3]
        })
    };
    match channel {
        RenderChannel::Color => products.shade.image.clone(),
        RenderChannel::Environment => products.environment.clone(),
        RenderChannel::Normal => RgbImage::from_fn(w, h, |x, y| match g.unit_normal(y * w + x) {
            Some(n) => [0, 1, 2].map(|k| (0.5 * n[k] + 0.5) as f32),
            None => [0.0; 3],
        }),
        RenderChannel::HitPoint => RgbImage::from_fn(w, h, |x, y| g.hit_point[y * w + x]),
        RenderChannel::Depth => scalar(&g.depth, false),
        RenderChannel::Alpha => scalar(&g.alpha, false),
        RenderChannel::Transparency => scalar(&g.transparency, true),
        RenderChannel::Ior => scalar(&g.ior, true),
        RenderChannel::BaseColor => RgbImage::from_fn(w, h, |x, y| {
            let i = y * w + x;
            let a = g.alpha[i];
            if a > 0.0 {
                g.base_color[i].map(|c| c / a)
            } else {
                [0.0; 3]
            }
        }),
        RenderChannel::Transmittance => RgbImage::from_fn(w, h, |x, y| [1.0 - g.alpha[y * w + x]; 3]),
        RenderChannel::Reflection => products.shade.reflection.clone(),
        RenderChannel::Refraction => products.shade.refraction.clone(),
    }
}

/// Writes `<stem>.png` (sRGB) and `<stem>.pfm` (linear) into `dir`.
pub fn write_image_pair(image: &RgbImage, dir: &Path, stem: &str) -> Result<[PathBuf; 2]> {
    let png = dir.join(format!("{stem}.png"));
    let pfm = dir.join(format!("{stem}.pfm"));
    image.write_png(&png)?;
    image.write_pfm(&pfm)?;
    Ok([png, pfm])
}

/// Applies the config's initial-guess overrides to the object's attributes.
pub fn initial_object(cfg: &ConfigDocument, object: &[GaussianPrimitive]) -> Vec<GaussianPrimitive> {
    let f = &cfg.fit;
    object
        .iter()
        .map(|p| {
            let mut p = p.clone();
            if let Some(eta) = f.initial_ior {
                p.attrs.ior = eta;
            }
            if let Some(b) = f.initial_base_color {
                p.attrs.base_color = b;
            }
            if let Some(t) = f.initial_transparency {
                p.attrs.transparency = t;
            }
            p
        })
        .collect()
}

/// Oracle targets for `cameras`, with the splatted environment composited
/// behind partially covered pixels.
pub fn fit_views(cfg: &ConfigDocument, cameras: &[Camera], environment: &[GaussianPrimitive]) -> Result<Vec<FitView>> {
    let scene = cfg.analytic_scene();
    cameras
        .iter()
        .map(|c| {
            Ok(FitView {
                camera: c.clone(),
                target: oracle_image(cfg, c, cfg.fit.target_spp)?,
                silhouette: glass_silhouette(&scene, c),
                environment: render_environment(environment, c, cfg.shading.background)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Blend-weighted means over the object's primitives.
    pub recovered_ior: f64,
    pub recovered_transparency: f64,
    pub recovered_base_color: [f64; 3],
    pub held_out_psnr: f64,
    pub held_out_ssim: f64,
    pub seconds: f64,
}

pub struct FitProducts {
    pub fitted: Vec<GaussianPrimitive>,
    pub history: Vec<LossRecord>,
    pub summary: FitSummary,
}

/// Fits the object's transparent attributes to oracle views and scores the
/// result on held-out views.
pub fn fit(
    cfg: &ConfigDocument,
    object: &[GaussianPrimitive],
    grid: &ProbeGrid,
    bvh: &MeshBvh,
    environment: &[GaussianPrimitive],
    mut progress: impl FnMut(&LossRecord),
) -> Result<FitProducts> {
    let start = Instant::now();
    let object = initial_object(cfg, object);
    let views = fit_views(cfg, &cfg.fit_cameras()?, environment)?;
    let opt = &cfg.fit.optimizer;
    let mut shade = cfg.shade_options(grid);
    shade.query.early_exit = false;
    let fitter = Fitter::new(&object, &views, grid, bvh, shade, opt.clone())?;
    let mut state = FitState::new(object.iter().map(|p| p.attrs).collect());
    let (terms, _) = fitter.evaluate(&state.attributes, false)?;
    let initial_loss = loss_total(&terms, &opt.loss);
    fitter.run(&mut state, opt.iterations, &mut progress)?;
    let (terms, _) = fitter.evaluate(&state.attributes, false)?;
    let final_loss = loss_total(&terms, &opt.loss);
    if !final_loss.is_finite() {
        return Err(Error::invalid(format!("fit diverged: loss is {final_loss} after {} iterations", state.iteration)));
    }
    let fitted = state.apply(&object);
    let mean = |f: fn(&crate::primitive::TransparentAttributes) -> f64| fitter.weighted_mean(&state.attributes, f).unwrap_or(f64::NAN);

    let mut held_psnr = Vec::new();
    let mut held_ssim = Vec::new();
    for camera in cfg.held_out_cameras()? {
        let env = render_environment(environment, &camera, cfg.shading.background)?;
        let image = render(cfg, &camera, grid, bvh, &fitted, &env)?;
        let target = oracle_image(cfg, &camera, cfg.fit.target_spp)?;
        held_psnr.push(psnr(image.image(), &target)?);
        held_ssim.push(ssim(image.image(), &target, opt.loss.ssim_window, opt.loss.ssim_sigma)?);
    }
    let avg = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let summary = FitSummary {
        iterations: state.iteration,
        initial_loss,
        final_loss,
        recovered_ior: mean(|a| a.ior),
        recovered_transparency: mean(|a| a.transparency),
        recovered_base_color: [mean(|a| a.base_color[0]), mean(|a| a.base_color[1]), mean(|a| a.base_color[2])],
        held_out_psnr: avg(&held_psnr),
        held_out_ssim: avg(&held_ssim),
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok(FitProducts { fitted, history: state.loss_history, summary })
}

pub fn write_loss_csv(path: &Path, history: &[LossRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(w, "iteration,total,l1,dssim,normal,mask")?;
    for r in history {
        let t = &r.terms;
        writeln!(w, "{},{},{},{},{},{}", r.iteration, r.total, t.l1, t.dssim, t.normal, t.mask)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;

    fn small_config(dir: &Path) -> ConfigDocument {
        let mut cfg = ConfigDocument::default();
        cfg.scene.environment_count = 3000;
        cfg.scene.object_count = 300;
        cfg.scene.mesh_subdivisions = 2;
        cfg.probes.panorama_height = 16;
        cfg.camera.width = 24;
        cfg.camera.height = 24;
        cfg.oracle.spp = 1;
        cfg.fit.views = 2;
        cfg.fit.held_out_views = 1;
        cfg.fit.width = 12;
        cfg.fit.height = 12;
        cfg.fit.target_spp = 1;
        cfg.output.dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn synth_writes_four_files_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let paths = write_scene(&cfg, &synthesize(&cfg).unwrap()).unwrap();
        let names: Vec<_> = paths.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_string()).collect();
        assert_eq!(names, ["environment.ply", "object.ply", "proxy.obj", "config.toml"]);
        let first: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
        write_scene(&cfg, &synthesize(&cfg).unwrap()).unwrap();
        for (p, bytes) in paths.iter().zip(&first) {
            assert_eq!(&fs::read(p).unwrap(), bytes, "{p:?} changed");
        }
        assert_eq!(ConfigDocument::load(&paths[3]).unwrap(), cfg);
    }

    #[test]
    fn missing_inputs_name_the_producing_command() {
        let dir = tempfile::tempdir().unwrap();
        match load_atlas(&dir.path().join("probes.gprb")) {
            Err(Error::MissingInput { hint, .. }) => assert!(hint.contains("glassplat bake")),
            other => panic!("{:?}", other.map(|_| ())),
        }
        match load_primitives(&dir.path().join("object.ply"), "synth") {
            Err(Error::MissingInput { hint, .. }) => assert!(hint.contains("glassplat synth")),
            other => panic!("{:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn empty_environment_bakes_to_misses() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path());
        let assets = synthesize(&cfg).unwrap();
        let (grid, summary) = bake(&cfg, &[], &assets.object).unwrap();
        assert_eq!((summary.probes, summary.environment_primitives), (8, 0));
        assert!(grid.probes.iter().all(|p| p.panorama.depth.iter().all(|d| d.is_infinite())));
    }

    #[test]
    fn render_channels_and_ablations() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        let assets = synthesize(&cfg).unwrap();
        let (grid, _) = bake(&cfg, &assets.environment, &assets.object).unwrap();
        let bvh = MeshBvh::build(assets.proxy.clone());
        let cam = cfg.render_camera().unwrap();
        let env = render_environment(&assets.environment, &cam, [0.0; 3]).unwrap();
        let base = render(&cfg, &cam, &grid, &bvh, &assets.object, &env).unwrap();
        for ch in RenderChannel::ALL {
            let img = channel_image(&base, ch);
            assert_eq!((img.width, img.height), (24, 24));
            assert_eq!(ch.name().parse::<RenderChannel>().unwrap(), ch);
        }
        assert!("albedo".parse::<RenderChannel>().is_err());
        // the sphere's normals face the camera in the middle of the frame
        let n = channel_image(&base, RenderChannel::Normal).get(12, 12);
        let eye = (Vec3::from(cfg.camera.eye) - Vec3::from(cfg.scene.sphere.center)).normalize();
        let n = Vec3::new(2.0 * n[0] as f64 - 1.0, 2.0 * n[1] as f64 - 1.0, 2.0 * n[2] as f64 - 1.0);
        assert!(n.dot(&eye) > 0.9);

        cfg.shading.iterquery = false;
        let naive = render(&cfg, &cam, &grid, &bvh, &assets.object, &env).unwrap();
        assert_ne!(naive.image().data, base.image().data);
        cfg.shading.iterquery = true;
        cfg.shading.deferred = false;
        let forward = render(&cfg, &cam, &grid, &bvh, &assets.object, &env).unwrap();
        assert_ne!(forward.image().data, base.image().data);
        // identical inputs give bit-identical images
        cfg.shading.deferred = true;
        assert_eq!(render(&cfg, &cam, &grid, &bvh, &assets.object, &env).unwrap().image().data, base.image().data);
        let small = RgbImage::new(8, 8);
        assert!(render(&cfg, &cam, &grid, &bvh, &assets.object, &small).is_err());
    }

    #[test]
    fn zero_iteration_fit_returns_the_input() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.fit.optimizer.iterations = 0;
        let assets = synthesize(&cfg).unwrap();
        let (grid, _) = bake(&cfg, &assets.environment, &assets.object).unwrap();
        let bvh = MeshBvh::build(assets.proxy.clone());
        let out = fit(&cfg, &assets.object, &grid, &bvh, &assets.environment, |_| {}).unwrap();
        assert_eq!(out.fitted, assets.object);
        assert!(out.history.is_empty());
        assert_eq!(out.summary.initial_loss, out.summary.final_loss);
        assert!((out.summary.recovered_ior - 1.5).abs() < 1e-12);
        let csv = dir.path().join("loss.csv");
        write_loss_csv(&csv, &out.history).unwrap();
        assert_eq!(fs::read_to_string(&csv).unwrap(), "iteration,total,l1,dssim,normal,mask\n");
    }

    #[test]
    fn fit_overrides_apply_before_fitting() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_config(dir.path());
        cfg.fit.initial_ior = Some(1.2);
        cfg.fit.optimizer.iterations = 2;
        let assets = synthesize(&cfg).unwrap();
        assert!(initial_object(&cfg, &assets.object).iter().all(|p| p.attrs.ior == 1.2));
        let (grid, _) = bake(&cfg, &assets.environment, &assets.object).unwrap();
        let bvh = MeshBvh::build(assets.proxy.clone());
        let mut seen = 0;
        let out = fit(&cfg, &assets.object, &grid, &bvh, &assets.environment, |_| seen += 1).unwrap();
        assert_eq!((seen, out.history.len(), out.summary.iterations), (2, 2, 2));
        assert!(out.summary.held_out_psnr.is_finite());
    }
}
