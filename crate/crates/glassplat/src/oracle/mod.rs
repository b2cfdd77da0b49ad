//! Ground truth: analytic scenes, a reference path tracer, exact panoramas,
//! and procedural Gaussians for those scenes.

pub mod scene;
pub mod synth;
pub mod trace;

pub use scene::{AnalyticScene, Material, SceneObject, Shape, SurfaceHit, Texture};
pub use synth::{sphere_gaussians, sphere_mesh, synthesize_environment_gaussians, GlassSphere, SynthOptions};
pub use trace::{analytic_panorama, bake_analytic, first_hit_distance, glass_path, glass_silhouette, path_trace, radiance, GlassPath, TraceOptions};
