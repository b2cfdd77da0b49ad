//! Two coincident discs with normals 80° apart: deferred shading blends the
//! normals and traces one path, forward shading traces one path per disc and
//! blends the colors.
//!
//! cargo run --release --example mixed_normals

use glassplat::buffer::RgbImage;
use glassplat::camera::Camera;
use glassplat::iterquery::QueryOptions;
use glassplat::math::{rotation_to_normal, Vec3};
use glassplat::oracle::{bake_analytic, sphere_mesh, AnalyticScene};
use glassplat::primitive::{GaussianPrimitive, TransparentAttributes};
use glassplat::probes::Aabb;
use glassplat::sh::dc_from_color;
use glassplat::shade::{shade_deferred, shade_forward, MeshBvh, ShadeContext, ShadeOptions};
use glassplat::splat::{rasterize, RenderOptions};

fn main() -> glassplat::Result<()> {
    let grid = bake_analytic(&AnalyticScene::checker_room(), &Aabb::new(Vec3::repeat(-0.5), Vec3::repeat(0.5))?, [2, 2, 2], 0.1, 128)?;
    let bvh = MeshBvh::build(sphere_mesh(Vec3::zeros(), 0.5, 4)?);
    let ctx = ShadeContext::new(&grid, &bvh, ShadeOptions::new(QueryOptions::for_grid(&grid)));
    let camera = Camera::look_at(Vec3::new(0.0, 0.0, -2.0), Vec3::zeros(), Vec3::y(), 6.0, 9, 9)?;
    let env = RgbImage::filled(9, 9, [0.2, 0.3, 0.4]);
    for degrees in [0.0, 20.0, 40.0, 60.0f64] {
        let tilt = degrees.to_radians();
        let disc = |sign: f64| {
            let n = Vec3::new(sign * tilt.sin(), 0.0, -tilt.cos());
            GaussianPrimitive::new(
                Vec3::new(0.0, 0.0, -0.5),
                Vec3::new(0.2, 0.2, 0.005),
                rotation_to_normal(&n),
                0.7,
                dc_from_color([0.5; 3]),
                TransparentAttributes::glass(n, 1.5, [1.0; 3]),
            )
        };
        let scene = vec![disc(1.0)?, disc(-1.0)?];
        let g = rasterize(&scene, &camera, &RenderOptions::default())?.gbuffer.expect("G-buffer");
        let d = shade_deferred(&ctx, &g, &camera, &env)?.image.get(4, 4);
        let f = shade_forward(&ctx, &scene, &camera, &env)?.image.get(4, 4);
        println!("±{degrees:>2}°  deferred {d:.4?}  forward {f:.4?}");
    }
    Ok(())
}
