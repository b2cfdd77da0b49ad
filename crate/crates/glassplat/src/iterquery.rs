//! Depth-based iterative probe query.
//!
//! Each selected probe starts by looking along the query direction. Every
//! iteration reads the probes' depths, projects the implied surface points onto
//! the query ray, blends them into an estimate `t̂`, and re-aims the probes at
//! `o + t̂ d`. The final color blends the probes' radiance along their last
//! query directions.
//!
//! The last iteration reads depths and reports convergence but does not re-aim
//! the probes, so `iterations = 1` is the plain trilinear average along `d`.

use rayon::prelude::*;

use crate::camera::Ray;
use crate::error::{Error, Result};
use crate::math::{is_unit, Vec3};
use crate::probes::ProbeGrid;

pub const DEFAULT_ITERATIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryOptions {
    /// Maximum number of iterations `T ≥ 1`.
    pub iterations: usize,
    /// Convergence tolerance on per-probe depth changes, in world units.
    pub epsilon: f64,
    /// Stop as soon as every probe's depth settles. The fitter turns this off
    /// so the result is a smooth function of the ray.
    pub early_exit: bool,
    /// Color returned when every probe misses.
    pub background: [f64; 3],
}

impl QueryOptions {
    pub fn for_grid(grid: &ProbeGrid) -> Self {
        QueryOptions {
            iterations: DEFAULT_ITERATIONS,
            epsilon: grid.default_epsilon(),
            early_exit: true,
            background: [0.0; 3],
        }
    }

    pub fn with_iterations(mut self, t: usize) -> Self {
        self.iterations = t;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("IterQuery needs at least one iteration"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("IterQuery epsilon must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryResult {
    pub color: [f64; 3],
    /// Estimated distance along the ray to the first scene intersection.
    pub t_hat: f64,
    pub iterations_used: usize,
    pub converged: bool,
    /// `t̂` came out negative and was clamped to zero.
    pub clamped: bool,
    /// Every selected probe missed along the initial direction.
    pub miss: bool,
}

/// Forward-mode derivative of a query with respect to its ray.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryTangent {
    pub color: [f64; 3],
    pub t_hat: f64,
}

/// The eight corners of the lattice cell around `o` (clamped to the grid)
/// with their trilinear weights. Axes with a single probe repeat it with weight 0.
pub fn trilinear_weights(o: &Vec3, grid: &ProbeGrid) -> [(usize, f64); 8] {
    trilinear_with_gradient(o, grid).0
}

fn trilinear_with_gradient(o: &Vec3, grid: &ProbeGrid) -> ([(usize, f64); 8], [Vec3; 8]) {
    let ext = grid.bbox.extent();
    let mut lo = [0usize; 3];
    let mut frac = [0.0f64; 3];
    let mut dfrac = [0.0f64; 3];
    for k in 0..3 {
        let n = grid.dims[k];
        if n < 2 || ext[k] <= 0.0 {
            continue;
        }
        let spacing = ext[k] / (n - 1) as f64;
        let s = (o[k] - grid.bbox.min[k]) / spacing;
        let inside = s > 0.0 && s < (n - 1) as f64;
        let s = s.clamp(0.0, (n - 1) as f64);
        let i0 = (s.floor() as usize).min(n - 2);
        lo[k] = i0;
        frac[k] = s - i0 as f64;
        dfrac[k] = if inside { 1.0 / spacing } else { 0.0 };
    }
    let mut out = [(0usize, 0.0f64); 8];
    let mut grad = [Vec3::zeros(); 8];
    for corner in 0..8 {
        let bit = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
        let mut idx = [0usize; 3];
        let mut f = [0.0; 3];
        let mut df = [0.0; 3];
        for k in 0..3 {
            idx[k] = (lo[k] + bit[k]).min(grid.dims[k] - 1);
            if bit[k] == 1 {
                f[k] = frac[k];
                df[k] = dfrac[k];
            } else {
                f[k] = 1.0 - frac[k];
                df[k] = -dfrac[k];
            }
        }
        let w = f[0] * f[1] * f[2];
        out[corner] = (grid.index(idx[0], idx[1], idx[2]), w);
        grad[corner] = Vec3::new(df[0] * f[1] * f[2], f[0] * df[1] * f[2], f[0] * f[1] * df[2]);
    }
    (out, grad)
}

struct Selected {
    probe: usize,
    weight: f64,
    dweight: f64,
    max_depth: f64,
}

/// One IterQuery with unit-length `ray.dir`.
pub fn iter_query(grid: &ProbeGrid, ray: &Ray, opts: &QueryOptions) -> Result<QueryResult> {
    Ok(run(grid, ray, None, opts)?.0)
}

/// IterQuery plus its derivative along a ray perturbation `(d_origin, d_dir)`.
/// `d_dir` should be tangent to the unit sphere at `ray.dir`.
pub fn iter_query_jvp(grid: &ProbeGrid, ray: &Ray, d_origin: &Vec3, d_dir: &Vec3, opts: &QueryOptions) -> Result<(QueryResult, QueryTangent)> {
    let (r, t) = run(grid, ray, Some((*d_origin, *d_dir)), opts)?;
    Ok((r, t.unwrap_or(QueryTangent { color: [0.0; 3], t_hat: 0.0 })))
}

/// Queries every ray in parallel; elementwise identical to [`iter_query`].
pub fn query_batch(grid: &ProbeGrid, rays: &[Ray], opts: &QueryOptions) -> Result<Vec<QueryResult>> {
    rays.par_iter().map(|r| iter_query(grid, r, opts)).collect()
}

fn run(grid: &ProbeGrid, ray: &Ray, tangent: Option<(Vec3, Vec3)>, opts: &QueryOptions) -> Result<(QueryResult, Option<QueryTangent>)> {
    opts.validate()?;
    if !is_unit(&ray.dir) {
        return Err(Error::invalid(format!("query direction {:?} is not unit length", ray.dir)));
    }
    let (o, d) = (ray.origin, ray.dir);
    let (do_, dd) = tangent.unwrap_or((Vec3::zeros(), Vec3::zeros()));
    let want = tangent.is_some();

    let (corners, grads) = trilinear_with_gradient(&o, grid);
    let mut sel: Vec<Selected> = Vec::with_capacity(8);
    for (&(probe, weight), g) in corners.iter().zip(&grads) {
        if weight <= 0.0 {
            continue;
        }
        let dweight = g.dot(&do_);
        match sel.iter_mut().find(|s| s.probe == probe) {
            Some(s) => {
                s.weight += weight;
                s.dweight += dweight;
            }
            None => sel.push(Selected {
                probe,
                weight,
                dweight,
                max_depth: grid.probes[probe].max_depth.map_or(f64::INFINITY, |m| m as f64),
            }),
        }
    }
    let miss = |result_iters| {
        (
            QueryResult {
                color: opts.background,
                t_hat: f64::INFINITY,
                iterations_used: result_iters,
                converged: false,
                clamped: false,
                miss: true,
            },
            want.then_some(QueryTangent { color: [0.0; 3], t_hat: 0.0 }),
        )
    };
    // Probes with no finite depth anywhere cannot locate the ray.
    sel.retain(|s| s.max_depth.is_finite());
    if sel.is_empty() {
        return Ok(miss(0));
    }

    let n = sel.len();
    let mut dirs = vec![d; n];
    let mut ddirs = vec![dd; n];
    let mut raw: Vec<(f64, f64)> = sel
        .iter()
        .zip(&dirs)
        .zip(&ddirs)
        .map(|((s, di), ddi)| depth_jvp(grid, s.probe, di, ddi, want))
        .collect();
    if raw.iter().all(|(t, _)| t.is_infinite()) {
        return Ok(miss(1));
    }

    let wsum: f64 = sel.iter().map(|s| s.weight).sum();
    let dwsum: f64 = sel.iter().map(|s| s.dweight).sum();

    let mut t_hat = 0.0;
    let mut dt_hat = 0.0;
    let mut clamped = false;
    let mut converged = false;
    let mut used = 0;
    for k in 1..=opts.iterations {
        used = k;
        // Blend the probes' surface points projected onto the query ray.
        let (mut acc, mut dacc) = (0.0, 0.0);
        for (i, s) in sel.iter().enumerate() {
            let (ti, dti) = fallback(raw[i], s.max_depth);
            let cos = d.dot(&dirs[i]);
            let proj = ti * cos + (grid.probes[s.probe].position - o).dot(&d);
            acc += s.weight * proj;
            if want {
                let dcos = dd.dot(&dirs[i]) + d.dot(&ddirs[i]);
                let dproj = dti * cos + ti * dcos + (grid.probes[s.probe].position - o).dot(&dd) - do_.dot(&d);
                dacc += s.dweight * proj + s.weight * dproj;
            }
        }
        t_hat = acc / wsum;
        dt_hat = (dacc - t_hat * dwsum) / wsum;
        clamped = t_hat < 0.0;
        if clamped {
            t_hat = 0.0;
            dt_hat = 0.0;
        }

        let target = o + d * t_hat;
        let dtarget = do_ + d * dt_hat + dd * t_hat;
        let mut new_dirs = dirs.clone();
        let mut new_ddirs = ddirs.clone();
        for (i, s) in sel.iter().enumerate() {
            let x = target - grid.probes[s.probe].position;
            let len = x.norm();
            if len > 1e-12 {
                new_dirs[i] = x / len;
                new_ddirs[i] = (dtarget - new_dirs[i] * new_dirs[i].dot(&dtarget)) / len;
            }
        }
        let new_raw: Vec<(f64, f64)> = sel
            .iter()
            .enumerate()
            .map(|(i, s)| depth_jvp(grid, s.probe, &new_dirs[i], &new_ddirs[i], want))
            .collect();
        converged = sel
            .iter()
            .enumerate()
            .all(|(i, s)| (fallback(raw[i], s.max_depth).0 - fallback(new_raw[i], s.max_depth).0).abs() <= opts.epsilon);
        if k == opts.iterations {
            break;
        }
        dirs = new_dirs;
        ddirs = new_ddirs;
        raw = new_raw;
        if converged && opts.early_exit {
            break;
        }
    }

    let mut color = [0.0; 3];
    let mut dcolor = [0.0; 3];
    for (i, s) in sel.iter().enumerate() {
        let probe = &grid.probes[s.probe];
        if want {
            let (sample, dc, _) = probe.sample_jvp(&dirs[i], &ddirs[i]);
            for c in 0..3 {
                color[c] += s.weight * sample.color[c];
                dcolor[c] += s.dweight * sample.color[c] + s.weight * dc[c];
            }
        } else {
            let sample = probe.sample(&dirs[i]);
            for c in 0..3 {
                color[c] += s.weight * sample.color[c];
            }
        }
    }
    for c in 0..3 {
        color[c] /= wsum;
        dcolor[c] = (dcolor[c] - color[c] * dwsum) / wsum;
    }
    Ok((
        QueryResult { color, t_hat, iterations_used: used, converged, clamped, miss: false },
        want.then_some(QueryTangent { color: dcolor, t_hat: dt_hat }),
    ))
}

fn depth_jvp(grid: &ProbeGrid, probe: usize, dir: &Vec3, ddir: &Vec3, want: bool) -> (f64, f64) {
    let p = &grid.probes[probe];
    if want {
        let tangent = ddir - dir * dir.dot(ddir);
        let (s, _, dt) = p.sample_jvp(dir, &tangent);
        (s.depth, dt)
    } else {
        (p.sample_depth(dir), 0.0)
    }
}

/// A miss is replaced by the probe's largest finite depth, which does not move.
fn fallback((t, dt): (f64, f64), max_depth: f64) -> (f64, f64) {
    if t.is_finite() {
        (t, dt)
    } else {
        (max_depth, 0.0)
    }
}
