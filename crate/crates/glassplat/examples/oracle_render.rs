//! Path-traces the room with and without the glass sphere and writes both.
//!
//! cargo run --release --example oracle_render -- [spp]

use std::path::Path;

use glassplat::config::ConfigDocument;
use glassplat::oracle::path_trace;

fn main() -> glassplat::Result<()> {
    let spp = std::env::args().nth(1).map_or(16, |s| s.parse().expect("spp"));
    let cfg = ConfigDocument::default();
    let camera = cfg.render_camera()?;
    let dir = Path::new("out/oracle");
    std::fs::create_dir_all(dir)?;
    let with_sphere = path_trace(&cfg.analytic_scene(), &camera, spp, 1, &cfg.trace_options())?;
    let room = path_trace(&cfg.environment_scene(), &camera, spp, 1, &cfg.trace_options())?;
    with_sphere.write_png(&dir.join("sphere.png"))?;
    room.write_png(&dir.join("room.png"))?;
    println!("wrote {} and {}", dir.join("sphere.png").display(), dir.join("room.png").display());
    Ok(())
}
