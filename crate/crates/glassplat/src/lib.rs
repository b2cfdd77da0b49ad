//! Transparent-object rendering for 3D Gaussian splat scenes.
//!
//! Scenes are rasterized into G-buffers that carry per-pixel surface
//! attributes. Transparent pixels are then shaded in a deferred pass that
//! refracts through a mesh proxy and looks up the refracted radiance in a grid
//! of panoramic color/depth probes.

pub mod buffer;
pub mod camera;
pub mod config;
pub mod error;
pub mod fit;
pub mod iterquery;
pub mod math;
pub mod metrics;
pub mod oracle;
pub mod pipeline;
pub mod ply;
pub mod panorama;
pub mod primitive;
pub mod probes;
pub mod sh;
pub mod shade;
pub mod splat;
pub mod validate;

pub use error::{Error, Result};
