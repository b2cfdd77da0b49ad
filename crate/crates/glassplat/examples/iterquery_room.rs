//! Depth accuracy of IterQuery in the analytic room as the iteration count
//! and the probe grid grow.
//!
//! cargo run --release --example iterquery_room

use glassplat::camera::Ray;
use glassplat::iterquery::{query_batch, QueryOptions};
use glassplat::math::Vec3;
use glassplat::oracle::{bake_analytic, first_hit_distance, AnalyticScene};
use glassplat::probes::Aabb;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> glassplat::Result<()> {
    let room = AnalyticScene::checker_room();
    let bbox = Aabb::new(Vec3::repeat(-0.5), Vec3::repeat(0.5))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rays = Vec::new();
    let mut truth = Vec::new();
    while rays.len() < 5000 {
        let o = Vec3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6));
        let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if d.norm() < 0.1 {
            continue;
        }
        let ray = Ray::towards(o, d.normalize());
        if let Some(t) = first_hit_distance(&room, &ray) {
            rays.push(ray);
            truth.push(t);
        }
    }
    for dims in [[2, 2, 2], [3, 3, 3], [4, 4, 4]] {
        let grid = bake_analytic(&room, &bbox, dims, 0.1, 256)?;
        let mut line = format!("dims {dims:?}:");
        for t in 1..=5 {
            let opts = QueryOptions { early_exit: false, ..QueryOptions::for_grid(&grid).with_iterations(t) };
            let mut err: Vec<f64> = query_batch(&grid, &rays, &opts)?.iter().zip(&truth).map(|(r, t)| (r.t_hat - t).abs()).collect();
            err.sort_by(f64::total_cmp);
            line += &format!("  T={t} median {:.2e}", err[err.len() / 2]);
        }
        println!("{line}");
    }
    Ok(())
}
