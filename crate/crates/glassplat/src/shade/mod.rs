//! Physically based shading of transparent pixels: optics, the mesh proxy and
//! its BVH, interior paths, and the deferred and forward passes.

pub mod bvh;
pub mod deferred;
pub mod mesh;
pub mod optics;
pub mod path;

pub use bvh::{Facing, Hit, MeshBvh};
pub use deferred::{
    shade_deferred, shade_forward, shade_sample, PixelGradients, PixelShade, PixelStatus, ShadeContext, ShadeDiagnostics, ShadeOptions, ShadeOutput,
    SurfaceSample, MIN_SHADED_ALPHA,
};
pub use mesh::TriangleMesh;
pub use path::{trace_transparent_path, PathFailure, PathTrace};
