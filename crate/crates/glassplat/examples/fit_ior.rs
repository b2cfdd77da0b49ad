//! Recovers the sphere's IOR from path-traced views, starting from 1.2.
//!
//! cargo run --release --example fit_ior -- [iterations]

use glassplat::config::ConfigDocument;
use glassplat::fit::{Attribute, FitConfig};
use glassplat::oracle::bake_analytic;
use glassplat::pipeline;
use glassplat::shade::MeshBvh;

fn main() -> glassplat::Result<()> {
    let iterations = std::env::args().nth(1).map_or(150, |s| s.parse().expect("iterations"));
    let mut cfg = ConfigDocument::default();
    cfg.fit.initial_ior = Some(1.2);
    cfg.fit.optimizer = FitConfig { optimize: vec![Attribute::Ior], iterations, ..FitConfig::default() };
    let assets = pipeline::synthesize(&cfg)?;
    let p = &cfg.probes;
    let grid = bake_analytic(&cfg.environment_scene(), &pipeline::object_bounds(&assets.object)?, p.dims, p.margin, p.panorama_height)?;
    let bvh = MeshBvh::build(assets.proxy.clone());
    let fit = pipeline::fit(&cfg, &assets.object, &grid, &bvh, &assets.environment, |r| {
        if r.iteration % 10 == 0 {
            println!("iteration {:>4}  loss {:.5}", r.iteration, r.total);
        }
    })?;
    println!("{}", serde_json::to_string_pretty(&fit.summary).unwrap());
    Ok(())
}
