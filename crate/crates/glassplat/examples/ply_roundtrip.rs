//! Writes splats to the extended PLY format, reads them back, and loads a
//! plain 3D-GS file without the transparency properties.
//!
//! cargo run --release --example ply_roundtrip

use glassplat::math::Vec3;
use glassplat::oracle::{sphere_gaussians, GlassSphere, SynthOptions};
use glassplat::ply::{read_ply, read_ply_from, write_ply};

const PLAIN: &str = "ply
format ascii 1.0
element vertex 1
property float x
property float y
property float z
property float f_dc_0
property float f_dc_1
property float f_dc_2
property float opacity
property float scale_0
property float scale_1
property float scale_2
property float rot_0
property float rot_1
property float rot_2
property float rot_3
end_header
0.5 0 1 1.2 0.3 -0.4 1.5 -2 -3 -5 1 0 0 0
";

fn main() -> glassplat::Result<()> {
    let dir = std::env::temp_dir().join("glassplat-ply");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("sphere.ply");
    let sphere = GlassSphere { base_color: [0.9, 0.6, 0.5], ..GlassSphere::new(Vec3::zeros(), 0.5, 1.45) };
    let prims = sphere_gaussians(&sphere, 1000, 1, &SynthOptions::default())?;
    write_ply(&path, &prims)?;
    // The file stores f32, so compare a second save with the first.
    let back = read_ply(&path)?;
    let again = dir.join("again.ply");
    write_ply(&again, &back)?;
    let same = std::fs::read(&path)? == std::fs::read(&again)?;
    println!("{} splats, {} bytes, save(load(file)) identical: {same}", back.len(), std::fs::metadata(&path)?.len());
    let err = prims.iter().zip(&back).map(|(a, b)| (a.position - b.position).norm()).fold(0.0, f64::max);
    println!("largest position change from f32 storage: {err:.2e}");

    let plain = read_ply_from(&mut PLAIN.as_bytes())?;
    let a = plain[0].attrs;
    println!("plain 3D-GS splat: t={} ior={} base={:?} normal={:?}", a.transparency, a.ior, a.base_color, a.normal.as_slice());
    Ok(())
}
