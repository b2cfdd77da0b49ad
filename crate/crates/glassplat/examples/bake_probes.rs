//! Bakes probes from the synthesized environment and compares one of them
//! with the exact panorama of the analytic room.
//!
//! cargo run --release --example bake_probes -- [panorama height]

use glassplat::config::ConfigDocument;
use glassplat::oracle::analytic_panorama;
use glassplat::panorama::MISS;
use glassplat::pipeline;

fn main() -> glassplat::Result<()> {
    let mut cfg = ConfigDocument::default();
    if let Some(h) = std::env::args().nth(1) {
        cfg.probes.panorama_height = h.parse().expect("height");
    }
    let assets = pipeline::synthesize(&cfg)?;
    let (grid, summary) = pipeline::bake(&cfg, &assets.environment, &assets.object)?;
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());

    let probe = &grid.probes[0];
    let exact = analytic_panorama(&cfg.environment_scene(), &probe.position, grid.panorama_height())?;
    let mut errors: Vec<f32> = probe
        .panorama
        .depth
        .iter()
        .zip(&exact.depth)
        .filter(|(d, _)| **d != MISS)
        .map(|(d, e)| (d - e).abs() / e)
        .collect();
    errors.sort_by(f32::total_cmp);
    let misses = probe.panorama.depth.iter().filter(|d| **d == MISS).count();
    println!("probe 0 at {:?}", probe.position.as_slice());
    println!("relative depth error: median {:.4}, 95th {:.4}", errors[errors.len() / 2], errors[errors.len() * 95 / 100]);
    println!("miss texels: {misses}");
    Ok(())
}
