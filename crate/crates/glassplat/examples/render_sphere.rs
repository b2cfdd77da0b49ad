//! Renders the glass sphere with the full pipeline and the oracle, with and
//! without IterQuery and with forward shading, and writes the images.
//!
//! cargo run --release --example render_sphere -- [out dir]

use std::path::PathBuf;

use glassplat::config::ConfigDocument;
use glassplat::metrics::{psnr, psnr_masked};
use glassplat::oracle::glass_silhouette;
use glassplat::pipeline;
use glassplat::shade::MeshBvh;

fn main() -> glassplat::Result<()> {
    let dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("out/render"), PathBuf::from);
    std::fs::create_dir_all(&dir)?;
    let cfg = ConfigDocument::default();
    let assets = pipeline::synthesize(&cfg)?;
    let (grid, _) = pipeline::bake(&cfg, &assets.environment, &assets.object)?;
    let bvh = MeshBvh::build(assets.proxy.clone());
    let camera = cfg.render_camera()?;
    let env = pipeline::render_environment(&assets.environment, &camera, cfg.shading.background)?;
    let oracle = pipeline::oracle_image(&cfg, &camera, cfg.oracle.spp)?;
    pipeline::write_image_pair(&oracle, &dir, "oracle")?;
    let mask: Vec<bool> = glass_silhouette(&cfg.analytic_scene(), &camera).iter().map(|&s| s > 0.5).collect();

    let variants = [("deferred", true, true), ("no_iterquery", true, false), ("forward", false, true)];
    for (name, deferred, iterquery) in variants {
        let mut c = cfg.clone();
        c.shading.deferred = deferred;
        c.shading.iterquery = iterquery;
        let out = pipeline::render(&c, &camera, &grid, &bvh, &assets.object, &env)?;
        pipeline::write_image_pair(out.image(), &dir, name)?;
        println!(
            "{name:<13} psnr {:6.2} dB   sphere {:6.2} dB   failed paths {}",
            psnr(out.image(), &oracle)?,
            psnr_masked(out.image(), &oracle, &mask)?,
            out.shade.diagnostics.invalid_paths()
        );
    }
    println!("images in {}", dir.display());
    Ok(())
}
