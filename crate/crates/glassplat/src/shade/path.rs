//! Two-refraction paths through a closed mesh proxy, allowing at most one
//! total internal reflection.

use crate::camera::Ray;
use crate::math::Vec3;
use crate::shade::bvh::{Facing, Hit, MeshBvh};
use crate::shade::optics::{reflect, reflect_jvp, refract, refract_jvp};

/// Segment-offset factor relative to the mesh bounding-box diagonal.
pub const RAY_OFFSET_FACTOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathFailure {
    /// No exiting surface was found from inside the mesh.
    Leak,
    /// A second total internal reflection.
    DoubleTir,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathTrace {
    pub entry_point: Vec3,
    /// Entry normal, facing the viewer.
    pub entry_normal: Vec3,
    /// Interior segments as `(start, end)`.
    pub segments: Vec<(Vec3, Vec3)>,
    pub exit_point: Vec3,
    /// Outward shading normal at the exit.
    pub exit_normal: Vec3,
    pub exit_dir: Vec3,
    pub tir_count: usize,
    /// Total length travelled inside the medium.
    pub length: f64,
    hits: Vec<Hit>,
}

impl PathTrace {
    pub fn exit_ray(&self) -> Ray {
        Ray { origin: self.exit_point, dir: self.exit_dir }
    }
}

/// Refracts the view ray into the medium at `entry`, marches to the exit, and
/// refracts back out. `view_dir` points from the camera toward the surface.
pub fn trace_transparent_path(
    bvh: &MeshBvh,
    entry: &Vec3,
    entry_normal: &Vec3,
    view_dir: &Vec3,
    eta: f64,
    offset: f64,
) -> Result<PathTrace, PathFailure> {
    let w_in = -view_dir;
    let n = if entry_normal.dot(&w_in) < 0.0 { -entry_normal } else { *entry_normal };
    // Entering the denser medium never reflects totally for eta ≥ 1.
    let mut dir = refract(&w_in, &n, 1.0 / eta).ok_or(PathFailure::DoubleTir)?;
    let mut start = *entry;
    let mut segments = Vec::with_capacity(2);
    let mut hits = Vec::with_capacity(2);
    let mut tir = 0;
    let mut length = 0.0;
    loop {
        let ray = Ray { origin: start + dir * offset, dir };
        let hit = bvh.intersect(&ray, 0.0, Facing::Exiting).ok_or(PathFailure::Leak)?;
        segments.push((start, hit.point));
        length += offset + hit.t;
        hits.push(hit);
        let n_out = if hit.normal.dot(&dir) > 0.0 { hit.normal } else { hit.face_normal };
        match refract(&-dir, &-n_out, eta) {
            Some(out) => {
                return Ok(PathTrace {
                    entry_point: *entry,
                    entry_normal: n,
                    segments,
                    exit_point: hit.point,
                    exit_normal: n_out,
                    exit_dir: out.normalize(),
                    tir_count: tir,
                    length,
                    hits,
                });
            }
            None => {
                tir += 1;
                if tir > 1 {
                    return Err(PathFailure::DoubleTir);
                }
                dir = reflect(&-dir, &-n_out);
                start = hit.point;
            }
        }
    }
}

/// Derivative of the exit ray `(point, direction)` with respect to `eta`,
/// following the same faces as `path`.
pub fn exit_ray_d_eta(bvh: &MeshBvh, path: &PathTrace, view_dir: &Vec3, eta: f64, offset: f64) -> (Vec3, Vec3) {
    let w_in = -view_dir;
    let n = path.entry_normal;
    let (mut dir, mut ddir) =
        refract_jvp(&w_in, &n, 1.0 / eta, &Vec3::zeros(), &Vec3::zeros(), -1.0 / (eta * eta)).expect("entry refraction exists");
    let mut start = path.entry_point;
    let mut dstart = Vec3::zeros();
    for (k, hit) in path.hits.iter().enumerate() {
        let origin = start + dir * offset;
        let dorigin = dstart + ddir * offset;
        let nf = hit.face_normal;
        let [v0, _, _] = bvh.mesh.corners(hit.face);
        let denom = dir.dot(&nf);
        let t = (v0 - origin).dot(&nf) / denom;
        let dt = -(dorigin.dot(&nf) + t * ddir.dot(&nf)) / denom;
        let point = origin + dir * t;
        let dpoint = dorigin + ddir * t + dir * dt;
        let (mut n_out, mut dn_out) = bvh.mesh.shading_normal_jvp(hit.face, hit.b1, hit.b2, &dpoint);
        if n_out.dot(&dir) <= 0.0 {
            n_out = hit.face_normal;
            dn_out = Vec3::zeros();
        }
        if k + 1 == path.hits.len() {
            let (out, dout) = refract_jvp(&-dir, &-n_out, eta, &-ddir, &-dn_out, 1.0).expect("exit refraction exists");
            let len = out.norm();
            let u = out / len;
            return (dpoint, (dout - u * u.dot(&dout)) / len);
        }
        let w = -dir;
        let new_dir = reflect(&w, &-n_out);
        let new_ddir = reflect_jvp(&w, &-n_out, &-ddir, &-dn_out);
        dir = new_dir;
        ddir = new_ddir;
        start = point;
        dstart = dpoint;
    }
    (Vec3::zeros(), Vec3::zeros())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shade::mesh::TriangleMesh;

    /// Axis-aligned box `[-hx, hx] × [-hy, hy] × [0, thickness]` as 12 outward triangles.
    pub(crate) fn slab(hx: f64, hy: f64, thickness: f64) -> TriangleMesh {
        let v = |x: f64, y: f64, z: f64| Vec3::new(x, y, z);
        let lo = v(-hx, -hy, 0.0);
        let hi = v(hx, hy, thickness);
        let c = [
            v(lo.x, lo.y, lo.z), v(hi.x, lo.y, lo.z), v(hi.x, hi.y, lo.z), v(lo.x, hi.y, lo.z),
            v(lo.x, lo.y, hi.z), v(hi.x, lo.y, hi.z), v(hi.x, hi.y, hi.z), v(lo.x, hi.y, hi.z),
        ];
        let tris = vec![
            [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7],
            [0, 1, 5], [0, 5, 4], [2, 3, 7], [2, 7, 6],
            [1, 2, 6], [1, 6, 5], [3, 0, 4], [3, 4, 7],
        ];
        TriangleMesh::new(c.to_vec(), tris, None).unwrap()
    }

    #[test]
    fn slab_normal_incidence_goes_straight() {
        let bvh = MeshBvh::build(slab(10.0, 10.0, 0.5));
        let p = trace_transparent_path(&bvh, &Vec3::new(0.3, 0.2, 0.0), &-Vec3::z(), &Vec3::z(), 1.5, 1e-6).unwrap();
        assert!((p.exit_dir - Vec3::z()).norm() < 1e-12);
        assert!((p.exit_point - Vec3::new(0.3, 0.2, 0.5)).norm() < 1e-9);
        assert_eq!(p.tir_count, 0);
    }

    #[test]
    fn slab_oblique_offset() {
        let thickness = 0.5;
        let eta = 1.5;
        let bvh = MeshBvh::build(slab(10.0, 10.0, thickness));
        let theta1 = 0.6f64;
        let v = Vec3::new(theta1.sin(), 0.0, theta1.cos());
        let p = trace_transparent_path(&bvh, &Vec3::zeros(), &-Vec3::z(), &v, eta, 1e-7).unwrap();
        assert!((p.exit_dir - v).norm() < 1e-9);
        let theta2 = (theta1.sin() / eta).asin();
        // perpendicular distance between the incoming line and the outgoing line
        let expected = thickness * theta1.sin() * (1.0 - theta1.cos() / (eta * theta2.cos()));
        let offset = (p.exit_point - v * p.exit_point.dot(&v)).norm();
        assert!((offset - expected).abs() < 1e-6, "{offset} vs {expected}");
    }

    #[test]
    fn block_side_reflection_then_exit() {
        // Enter the top of a 2×2×2 block steeply, reflect totally off the +x side,
        // and leave through the bottom.
        let eta = 1.5;
        let bvh = MeshBvh::build(slab(1.0, 1.0, 2.0));
        let theta1 = 70f64.to_radians();
        let v = Vec3::new(theta1.sin(), 0.0, theta1.cos());
        let x0 = 0.5;
        let p = trace_transparent_path(&bvh, &Vec3::new(x0, 0.0, 0.0), &-Vec3::z(), &v, eta, 1e-9).unwrap();
        assert_eq!(p.tir_count, 1);
        assert_eq!(p.segments.len(), 2);
        let theta2 = (theta1.sin() / eta).asin();
        let z_side = (1.0 - x0) / theta2.tan();
        let x_exit = 1.0 - (2.0 - z_side) * theta2.tan();
        assert!((p.exit_point - Vec3::new(x_exit, 0.0, 2.0)).norm() < 1e-6);
        assert!((p.exit_dir - Vec3::new(-theta1.sin(), 0.0, theta1.cos())).norm() < 1e-9);
        assert!((p.segments[0].1 - Vec3::new(1.0, 0.0, z_side)).norm() < 1e-6);
    }

    #[test]
    fn sphere_chords_never_reflect_once() {
        // Every interior chord of a sphere meets the surface at the same angle, so a
        // totally reflected ray keeps reflecting and the path is rejected.
        let bvh = MeshBvh::build(TriangleMesh::icosphere(Vec3::zeros(), 1.0, 5).unwrap());
        let entry = Vec3::new(0.0, 0.0, -1.0);
        let d = Vec3::new(60f64.to_radians().sin(), 0.0, 60f64.to_radians().cos());
        // A mismatched entry normal sends the ray straight along d.
        let r = trace_transparent_path(&bvh, &entry, &-d, &d, 1.5, 1e-6);
        assert_eq!(r.unwrap_err(), PathFailure::DoubleTir);
    }

    #[test]
    fn exit_derivative_matches_finite_differences() {
        let bvh = MeshBvh::build(TriangleMesh::icosphere(Vec3::zeros(), 1.0, 3).unwrap());
        let v = Vec3::new(0.1, 0.05, 1.0).normalize();
        let hit = bvh.intersect(&Ray::towards(Vec3::new(0.3, 0.2, -3.0), v), 0.0, Facing::Any).unwrap();
        let eta = 1.45;
        let off = 1e-5;
        let p = trace_transparent_path(&bvh, &hit.point, &hit.normal, &v, eta, off).unwrap();
        let (dp, dd) = exit_ray_d_eta(&bvh, &p, &v, eta, off);
        let h = 1e-6;
        let a = trace_transparent_path(&bvh, &hit.point, &hit.normal, &v, eta + h, off).unwrap();
        let b = trace_transparent_path(&bvh, &hit.point, &hit.normal, &v, eta - h, off).unwrap();
        assert!(((a.exit_point - b.exit_point) / (2.0 * h) - dp).norm() < 1e-5);
        assert!(((a.exit_dir - b.exit_dir) / (2.0 * h) - dd).norm() < 1e-5);
    }
}
