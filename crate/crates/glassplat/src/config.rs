//! Declarative run configuration shared by every pipeline stage.
//!
//! Documents are TOML. Every table and key is optional and unknown keys are
//! rejected; [`ConfigDocument::to_toml_string`] writes the fully resolved
//! document back out with all defaults filled in.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::fit::FitConfig;
use crate::iterquery::QueryOptions;
use crate::math::Vec3;
use crate::oracle::{AnalyticScene, GlassSphere, SynthOptions, TraceOptions};
use crate::primitive::{IOR_MAX, IOR_MIN};
use crate::probes::ProbeGrid;
use crate::shade::ShadeOptions;

pub const ENVIRONMENT_PLY: &str = "environment.ply";
pub const OBJECT_PLY: &str = "object.ply";
pub const PROXY_OBJ: &str = "proxy.obj";
pub const RESOLVED_CONFIG: &str = "config.toml";
pub const ATLAS: &str = "probes.gprb";
pub const FITTED_PLY: &str = "fitted.ply";
pub const LOSS_CSV: &str = "loss.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigDocument {
    pub seed: u64,
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub probes: ProbeConfig,
    pub iterquery: IterQueryConfig,
    pub shading: ShadingConfig,
    pub oracle: OracleConfig,
    pub fit: FitSection,
    pub output: OutputConfig,
}

/// Checker room with one glass sphere in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    /// Ground truth for the oracle. Its base color tints transmitted light.
    pub sphere: GlassSphere,
    pub environment_count: usize,
    pub object_count: usize,
    pub mesh_subdivisions: usize,
    pub environment_synth: SynthOptions,
    pub object_synth: SynthOptions,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            room_min: [-2.0, -1.0, -2.0],
            room_max: [2.0, 3.0, 2.0],
            sphere: GlassSphere::new(Vec3::zeros(), 0.5, 1.5),
            environment_count: 50_000,
            object_count: 4000,
            mesh_subdivisions: 5,
            environment_synth: SynthOptions::default(),
            object_synth: SynthOptions { opacity: 1.0, ..SynthOptions::default() },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    pub fov_y_deg: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig { eye: [0.0, 0.9, -1.8], target: [0.0; 3], up: [0.0, 1.0, 0.0], fov_y_deg: 50.0, width: 256, height: 256 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    /// Probes per axis over the object's bounding box, at least 2 each.
    pub dims: [usize; 3],
    /// Outward padding of the probe box, in world units.
    pub margin: f64,
    /// Panorama height; the width is twice this.
    pub panorama_height: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig { dims: [2, 2, 2], margin: 0.1, panorama_height: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IterQueryConfig {
    pub iterations: usize,
    /// Convergence tolerance relative to the probe box diagonal.
    pub epsilon_factor: f64,
    pub early_exit: bool,
}

impl Default for IterQueryConfig {
    fn default() -> Self {
        IterQueryConfig { iterations: 5, epsilon_factor: 1e-3, early_exit: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShadingConfig {
    /// Shade from the blended G-buffer; `false` shades every primitive and blends the results.
    pub deferred: bool,
    /// `false` runs a single iteration, which averages the probes at their first depth guess.
    pub iterquery: bool,
    pub absorption: bool,
    pub fresnel_override: Option<f64>,
    pub branch_blend: [f64; 2],
    pub background: [f64; 3],
}

impl Default for ShadingConfig {
    fn default() -> Self {
        ShadingConfig {
            deferred: true,
            iterquery: true,
            absorption: true,
            fresnel_override: None,
            branch_blend: [0.3, 0.7],
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub spp: usize,
    pub exit_fresnel: bool,
    pub max_depth: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let t = TraceOptions::default();
        OracleConfig { spp: 16, exit_fresnel: t.exit_fresnel, max_depth: t.max_depth }
    }
}

/// Training and held-out views on a ring around the sphere, plus the initial
/// guess the fit starts from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub views: usize,
    pub held_out_views: usize,
    pub ring_radius: f64,
    pub elevation_deg: f64,
    pub fov_y_deg: f64,
    pub width: usize,
    pub height: usize,
    /// Samples per pixel of the oracle target images.
    pub target_spp: usize,
    /// Overrides for the object's attributes before fitting.
    pub initial_ior: Option<f64>,
    pub initial_base_color: Option<[f64; 3]>,
    pub initial_transparency: Option<f64>,
    pub optimizer: FitConfig,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            views: 16,
            held_out_views: 2,
            ring_radius: 1.6,
            elevation_deg: 5.0,
            fov_y_deg: 50.0,
            width: 64,
            height: 64,
            target_spp: 4,
            initial_ior: None,
            initial_base_color: None,
            initial_transparency: None,
            optimizer: FitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out") }
    }
}

impl Default for ConfigDocument {
    fn default() -> Self {
        ConfigDocument {
            seed: 1,
            scene: SceneConfig::default(),
            camera: CameraConfig::default(),
            probes: ProbeConfig::default(),
            iterquery: IterQueryConfig::default(),
            shading: ShadingConfig::default(),
            oracle: OracleConfig::default(),
            fit: FitSection::default(),
            output: OutputConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

fn at_least_one(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be at least 1")));
    }
    Ok(())
}

fn unit_range(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
    }
}

fn synth_valid(name: &str, o: &SynthOptions) -> Result<()> {
    positive(&format!("{name}.sigma_factor"), o.sigma_factor)?;
    positive(&format!("{name}.thickness"), o.thickness)?;
    positive(&format!("{name}.detail_weight"), o.detail_weight)?;
    if !(o.opacity > 0.0 && o.opacity <= 1.0) {
        return Err(Error::Config(format!("{name}.opacity must lie in (0, 1], got {}", o.opacity)));
    }
    unit_range(&format!("{name}.jitter"), o.jitter)
}

impl ConfigDocument {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: ConfigDocument = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput { path: path.to_path_buf(), hint: "config file not found".into() },
            _ => Error::Io(e),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config document always serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        for k in 0..3 {
            if !(s.room_min[k] < s.room_max[k]) {
                return Err(Error::Config("scene.room_min must be below scene.room_max on every axis".into()));
            }
        }
        positive("scene.sphere.radius", s.sphere.radius)?;
        if !(IOR_MIN..=IOR_MAX).contains(&s.sphere.ior) {
            return Err(Error::Config(format!("scene.sphere.ior must lie in [{IOR_MIN}, {IOR_MAX}], got {}", s.sphere.ior)));
        }
        for c in s.sphere.base_color {
            unit_range("scene.sphere.base_color", c)?;
        }
        at_least_one("scene.environment_count", s.environment_count)?;
        at_least_one("scene.object_count", s.object_count)?;
        at_least_one("scene.mesh_subdivisions", s.mesh_subdivisions)?;
        synth_valid("scene.environment_synth", &s.environment_synth)?;
        synth_valid("scene.object_synth", &s.object_synth)?;

        let c = &self.camera;
        at_least_one("camera.width", c.width)?;
        at_least_one("camera.height", c.height)?;
        if !(c.fov_y_deg > 0.0 && c.fov_y_deg < 180.0) {
            return Err(Error::Config(format!("camera.fov_y_deg must lie in (0, 180), got {}", c.fov_y_deg)));
        }
        self.render_camera()?;

        let p = &self.probes;
        if p.dims.iter().any(|&d| d < 2) {
            return Err(Error::Config(format!("probes.dims needs at least 2 probes per axis, got {:?}", p.dims)));
        }
        if !(p.margin >= 0.0 && p.margin.is_finite()) {
            return Err(Error::Config(format!("probes.margin must be finite and ≥ 0, got {}", p.margin)));
        }
        if p.panorama_height < 2 {
            return Err(Error::Config("probes.panorama_height must be at least 2".into()));
        }

        at_least_one("iterquery.iterations", self.iterquery.iterations)?;
        positive("iterquery.epsilon_factor", self.iterquery.epsilon_factor)?;

        let sh = &self.shading;
        if let Some(f) = sh.fresnel_override {
            unit_range("shading.fresnel_override", f)?;
        }
        let [lo, hi] = sh.branch_blend;
        if !(0.0 <= lo && lo < hi && hi <= 1.0) {
            return Err(Error::Config(format!("shading.branch_blend must satisfy 0 ≤ lo < hi ≤ 1, got [{lo}, {hi}]")));
        }

        at_least_one("oracle.spp", self.oracle.spp)?;
        at_least_one("oracle.max_depth", self.oracle.max_depth)?;

        let f = &self.fit;
        at_least_one("fit.views", f.views)?;
        at_least_one("fit.width", f.width)?;
        at_least_one("fit.height", f.height)?;
        at_least_one("fit.target_spp", f.target_spp)?;
        positive("fit.ring_radius", f.ring_radius)?;
        if !(f.fov_y_deg > 0.0 && f.fov_y_deg < 180.0) {
            return Err(Error::Config(format!("fit.fov_y_deg must lie in (0, 180), got {}", f.fov_y_deg)));
        }
        if !(f.elevation_deg.abs() < 90.0) {
            return Err(Error::Config(format!("fit.elevation_deg must lie in (−90, 90), got {}", f.elevation_deg)));
        }
        if let Some(eta) = f.initial_ior {
            if !(IOR_MIN..=IOR_MAX).contains(&eta) {
                return Err(Error::Config(format!("fit.initial_ior must lie in [{IOR_MIN}, {IOR_MAX}], got {eta}")));
            }
        }
        if let Some(b) = f.initial_base_color {
            for c in b {
                unit_range("fit.initial_base_color", c)?;
            }
        }
        if let Some(t) = f.initial_transparency {
            unit_range("fit.initial_transparency", t)?;
        }
        f.optimizer.validate()
    }

    /// The room without the sphere.
    pub fn environment_scene(&self) -> AnalyticScene {
        AnalyticScene::box_room(self.scene.room_min.into(), self.scene.room_max.into())
    }

    /// The room with the glass sphere, as the oracle sees it.
    pub fn analytic_scene(&self) -> AnalyticScene {
        let s = &self.scene.sphere;
        self.environment_scene().with_tinted_glass_sphere(s.center.into(), s.radius, s.ior, s.base_color)
    }

    pub fn render_camera(&self) -> Result<Camera> {
        let c = &self.camera;
        Camera::look_at(c.eye.into(), c.target.into(), c.up.into(), c.fov_y_deg, c.width, c.height)
            .map_err(|e| Error::Config(format!("camera: {e}")))
    }

    /// Training views evenly spaced on the ring.
    pub fn fit_cameras(&self) -> Result<Vec<Camera>> {
        let f = &self.fit;
        Camera::ring(self.scene.sphere.center.into(), f.ring_radius, f.elevation_deg, f.views, f.fov_y_deg, f.width, f.height)
    }

    /// Held-out views, offset from the training views by half a step.
    pub fn held_out_cameras(&self) -> Result<Vec<Camera>> {
        let f = &self.fit;
        let step = 360.0 / f.views as f64;
        (0..f.held_out_views)
            .map(|k| {
                let az = step * (0.5 + (k * f.views / f.held_out_views.max(1)) as f64);
                Camera::orbit(self.scene.sphere.center.into(), f.ring_radius, az, f.elevation_deg, f.fov_y_deg, f.width, f.height)
            })
            .collect()
    }

    pub fn query_options(&self, grid: &ProbeGrid) -> QueryOptions {
        let q = &self.iterquery;
        QueryOptions {
            iterations: if self.shading.iterquery { q.iterations } else { 1 },
            epsilon: q.epsilon_factor * grid.bbox.diagonal(),
            early_exit: q.early_exit,
            background: self.shading.background,
        }
    }

    pub fn shade_options(&self, grid: &ProbeGrid) -> ShadeOptions {
        let s = &self.shading;
        ShadeOptions {
            query: self.query_options(grid),
            fresnel_override: s.fresnel_override,
            branch_blend: (s.branch_blend[0], s.branch_blend[1]),
            absorption: s.absorption,
        }
    }

    pub fn trace_options(&self) -> TraceOptions {
        TraceOptions { exit_fresnel: self.oracle.exit_fresnel, max_depth: self.oracle.max_depth }
    }

    pub fn output_path(&self, name: &str) -> PathBuf {
        self.output.dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        assert_eq!(ConfigDocument::from_toml_str("").unwrap(), ConfigDocument::default());
    }

    #[test]
    fn resolved_document_round_trips_with_every_default_written() {
        let text = ConfigDocument::default().to_toml_string();
        for key in ["seed", "environment_count", "panorama_height", "epsilon_factor", "spp", "lambda_dssim", "learning_rates", "dir"] {
            assert!(text.contains(key), "{key} missing from\n{text}");
        }
        assert_eq!(ConfigDocument::from_toml_str(&text).unwrap(), ConfigDocument::default());

        let mut custom = ConfigDocument::default();
        custom.fit.initial_ior = Some(1.2);
        custom.shading.fresnel_override = Some(0.1);
        custom.probes.dims = [4, 4, 4];
        assert_eq!(ConfigDocument::from_toml_str(&custom.to_toml_string()).unwrap(), custom);
    }

    #[test]
    fn partial_document_keeps_other_defaults() {
        let doc = ConfigDocument::from_toml_str("seed = 7\n[probes]\ndims = [4, 4, 4]\n[fit.optimizer]\niterations = 3\n").unwrap();
        assert_eq!(doc.seed, 7);
        assert_eq!(doc.probes.dims, [4, 4, 4]);
        assert_eq!(doc.probes.panorama_height, 512);
        assert_eq!(doc.fit.optimizer.iterations, 3);
        assert_eq!(doc.fit.optimizer.momentum, 0.9);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        for text in [
            "sede = 1",
            "[probes]\ndimz = [2, 2, 2]",
            "[scene.sphere]\ncenter = [0, 0, 0]\nradius = 0.5\nior = 1.5\ncolour = [1, 1, 1]",
            "[scene]\nenvironment_count = 0",
            "[scene]\nobject_count = 0",
            "[probes]\ndims = [2, 0, 2]",
            "[iterquery]\niterations = 0",
            "[oracle]\nspp = 0",
            "[camera]\nfov_y_deg = 180",
            "[camera]\neye = [0, 0, 0]",
            "[shading]\nbranch_blend = [0.7, 0.3]",
            "[fit]\ninitial_ior = 0.9",
            "[fit.optimizer]\nmomentum = 1.0",
            "[scene.environment_synth]\nopacity = 0",
        ] {
            assert!(matches!(ConfigDocument::from_toml_str(text), Err(Error::Config(_))), "accepted {text:?}");
        }
    }

    #[test]
    fn disabling_iterquery_runs_one_iteration() {
        let mut doc = ConfigDocument::default();
        let grid = crate::oracle::bake_analytic(
            &doc.environment_scene(),
            &crate::probes::Aabb::new(Vec3::repeat(-0.5), Vec3::repeat(0.5)).unwrap(),
            [2, 2, 2],
            0.1,
            8,
        )
        .unwrap();
        assert_eq!(doc.query_options(&grid).iterations, 5);
        doc.shading.iterquery = false;
        assert_eq!(doc.query_options(&grid).iterations, 1);
        assert!((doc.query_options(&grid).epsilon - 1e-3 * grid.bbox.diagonal()).abs() < 1e-15);
    }

    #[test]
    fn held_out_views_fall_between_training_views() {
        let doc = ConfigDocument::default();
        let train = doc.fit_cameras().unwrap();
        let held = doc.held_out_cameras().unwrap();
        assert_eq!((train.len(), held.len()), (16, 2));
        for h in &held {
            for t in &train {
                assert!((h.center() - t.center()).norm() > 0.1);
            }
        }
    }
}
