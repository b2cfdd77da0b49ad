//! Synthesizes the default room and glass sphere and writes them to disk.
//!
//! cargo run --release --example synth_scene -- out/demo

use std::path::PathBuf;

use glassplat::config::ConfigDocument;
use glassplat::pipeline;

fn main() -> glassplat::Result<()> {
    let mut cfg = ConfigDocument::default();
    cfg.output.dir = std::env::args().nth(1).map_or_else(|| PathBuf::from("out/synth"), PathBuf::from);
    let assets = pipeline::synthesize(&cfg)?;
    println!("environment: {} splats", assets.environment.len());
    println!("object:      {} splats", assets.object.len());
    println!("proxy:       {} triangles", assets.proxy.triangles.len());
    for path in pipeline::write_scene(&cfg, &assets)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
