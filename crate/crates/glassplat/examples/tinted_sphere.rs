//! Fits the base color of a tinted glass sphere. Absorption lives in the base
//! color only, so resetting it to white gives back the colorless render.
//!
//! cargo run --release --example tinted_sphere -- [iterations]

use glassplat::config::ConfigDocument;
use glassplat::fit::{Attribute, FitConfig};
use glassplat::pipeline;
use glassplat::shade::MeshBvh;

fn main() -> glassplat::Result<()> {
    let iterations = std::env::args().nth(1).map_or(100, |s| s.parse().expect("iterations"));
    let mut cfg = ConfigDocument::default();
    cfg.scene.sphere.base_color = [0.9, 0.5, 0.5];
    cfg.fit.initial_base_color = Some([1.0; 3]);
    cfg.fit.optimizer = FitConfig { optimize: vec![Attribute::BaseColor], iterations, ..FitConfig::default() };
    let assets = pipeline::synthesize(&cfg)?;
    let (grid, _) = pipeline::bake(&cfg, &assets.environment, &assets.object)?;
    let bvh = MeshBvh::build(assets.proxy.clone());
    let fit = pipeline::fit(&cfg, &assets.object, &grid, &bvh, &assets.environment, |_| {})?;
    let b = fit.summary.recovered_base_color;
    println!("true base color [0.900, 0.500, 0.500]");
    println!("recovered       [{:.3}, {:.3}, {:.3}] after {} iterations", b[0], b[1], b[2], fit.summary.iterations);
    Ok(())
}
