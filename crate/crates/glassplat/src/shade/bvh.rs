//! Bounding-volume hierarchy over a triangle mesh.

use crate::camera::Ray;
use crate::math::Vec3;
use crate::shade::mesh::TriangleMesh;

const LEAF_SIZE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub t: f64,
    pub point: Vec3,
    pub face: usize,
    pub b1: f64,
    pub b2: f64,
    pub face_normal: Vec3,
    pub normal: Vec3,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    lo: Vec3,
    hi: Vec3,
    /// Leaf: range into `order`. Interior: `start` is the right child and the
    /// left child immediately follows this node.
    start: u32,
    count: u32,
}

#[derive(Debug, Clone)]
pub struct MeshBvh {
    pub mesh: TriangleMesh,
    nodes: Vec<Node>,
    order: Vec<u32>,
}

/// Which surfaces a trace may stop at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Facing {
    Any,
    /// Only faces whose normal points along the ray (leaving a closed mesh).
    Exiting,
}

impl MeshBvh {
    pub fn build(mesh: TriangleMesh) -> Self {
        let n = mesh.triangles.len();
        let centroids: Vec<Vec3> = (0..n).map(|f| {
            let [a, b, c] = mesh.corners(f);
            (a + b + c) / 3.0
        }).collect();
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut nodes = Vec::with_capacity(2 * n.max(1));
        if n > 0 {
            build_node(&mesh, &centroids, &mut order, 0, n, &mut nodes);
        }
        MeshBvh { mesh, nodes, order }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        self.nodes.first().map(|n| (n.lo, n.hi))
    }

    /// Diagonal of the mesh bounds.
    pub fn diagonal(&self) -> f64 {
        self.bounds().map_or(0.0, |(lo, hi)| (hi - lo).norm())
    }

    /// Nearest hit with `t > t_min`.
    pub fn intersect(&self, ray: &Ray, t_min: f64, facing: Facing) -> Option<Hit> {
        self.intersect_counted(ray, t_min, facing).0
    }

    /// Nearest hit plus the number of triangle tests performed.
    pub fn intersect_counted(&self, ray: &Ray, t_min: f64, facing: Facing) -> (Option<Hit>, usize) {
        let mut tests = 0;
        if self.nodes.is_empty() {
            return (None, 0);
        }
        let inv = ray.dir.map(|d| 1.0 / d);
        let mut best: Option<(f64, usize, f64, f64)> = None;
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            let node = &self.nodes[i];
            let t_max = best.map_or(f64::INFINITY, |b| b.0);
            if !slab_test(&node.lo, &node.hi, &ray.origin, &inv, t_min, t_max) {
                continue;
            }
            if node.count > 0 {
                for &f in &self.order[node.start as usize..(node.start + node.count) as usize] {
                    let f = f as usize;
                    if facing == Facing::Exiting && self.mesh.face_normals[f].dot(&ray.dir) <= 0.0 {
                        continue;
                    }
                    tests += 1;
                    if let Some((t, b1, b2)) = intersect_triangle(&self.mesh.corners(f), ray) {
                        if t > t_min && best.map_or(true, |b| t < b.0) {
                            best = Some((t, f, b1, b2));
                        }
                    }
                }
            } else {
                stack.push(node.start as usize);
                stack.push(i + 1);
            }
        }
        (best.map(|(t, f, b1, b2)| self.make_hit(ray, t, f, b1, b2)), tests)
    }

    /// Reference scan over every triangle.
    pub fn intersect_brute(&self, ray: &Ray, t_min: f64, facing: Facing) -> Option<Hit> {
        let mut best: Option<(f64, usize, f64, f64)> = None;
        for f in 0..self.mesh.triangles.len() {
            if facing == Facing::Exiting && self.mesh.face_normals[f].dot(&ray.dir) <= 0.0 {
                continue;
            }
            if let Some((t, b1, b2)) = intersect_triangle(&self.mesh.corners(f), ray) {
                if t > t_min && best.map_or(true, |b| t < b.0) {
                    best = Some((t, f, b1, b2));
                }
            }
        }
        best.map(|(t, f, b1, b2)| self.make_hit(ray, t, f, b1, b2))
    }

    fn make_hit(&self, ray: &Ray, t: f64, face: usize, b1: f64, b2: f64) -> Hit {
        Hit {
            t,
            point: ray.at(t),
            face,
            b1,
            b2,
            face_normal: self.mesh.face_normals[face],
            normal: self.mesh.shading_normal(face, b1, b2),
        }
    }
}

fn build_node(mesh: &TriangleMesh, centroids: &[Vec3], order: &mut [u32], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    let mut clo = lo;
    let mut chi = hi;
    for &f in &order[start..end] {
        for v in mesh.corners(f as usize) {
            lo = lo.inf(&v);
            hi = hi.sup(&v);
        }
        clo = clo.inf(&centroids[f as usize]);
        chi = chi.sup(&centroids[f as usize]);
    }
    let idx = nodes.len();
    nodes.push(Node { lo, hi, start: start as u32, count: (end - start) as u32 });
    if end - start <= LEAF_SIZE {
        return idx;
    }
    let ext = chi - clo;
    let axis = ext.imax();
    if ext[axis] <= 0.0 {
        return idx;
    }
    let mid = (start + end) / 2;
    order[start..end].select_nth_unstable_by(mid - start, |&a, &b| centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]));
    build_node(mesh, centroids, order, start, mid, nodes);
    let right = build_node(mesh, centroids, order, mid, end, nodes);
    nodes[idx].start = right as u32;
    nodes[idx].count = 0;
    idx
}

#[inline]
fn slab_test(lo: &Vec3, hi: &Vec3, o: &Vec3, inv: &Vec3, t_min: f64, t_max: f64) -> bool {
    let mut t0 = t_min;
    let mut t1 = t_max;
    for k in 0..3 {
        if inv[k].is_infinite() {
            // Ray parallel to this slab: inside or never.
            if o[k] < lo[k] || o[k] > hi[k] {
                return false;
            }
            continue;
        }
        let a = (lo[k] - o[k]) * inv[k];
        let b = (hi[k] - o[k]) * inv[k];
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        if a > t0 {
            t0 = a;
        }
        if b < t1 {
            t1 = b;
        }
        if t0 > t1 * (1.0 + 1e-12) + 1e-12 {
            return false;
        }
    }
    true
}

/// Möller–Trumbore; returns `(t, b1, b2)` for hits in front of or behind the origin.
#[inline]
pub fn intersect_triangle(tri: &[Vec3; 3], ray: &Ray) -> Option<(f64, f64, f64)> {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = ray.dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = ray.origin - tri[0];
    let b1 = s.dot(&p) * inv;
    if !(-1e-12..=1.0 + 1e-12).contains(&b1) {
        return None;
    }
    let q = s.cross(&e1);
    let b2 = ray.dir.dot(&q) * inv;
    if b2 < -1e-12 || b1 + b2 > 1.0 + 1e-12 {
        return None;
    }
    Some((e2.dot(&q) * inv, b1, b2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn chord_through_sphere_center() {
        let bvh = MeshBvh::build(TriangleMesh::icosphere(Vec3::zeros(), 1.0, 4).unwrap());
        let ray = Ray::towards(Vec3::new(0.0, 0.0, -3.0), Vec3::new(0.01, 0.02, 1.0));
        let entry = bvh.intersect(&ray, 0.0, Facing::Any).unwrap();
        let inside = Ray::new(entry.point, ray.dir).unwrap();
        let exit = bvh.intersect(&inside, 1e-6, Facing::Exiting).unwrap();
        assert!((exit.t - 2.0).abs() < 0.01, "{}", exit.t);
        assert!(exit.normal.dot(&ray.dir) > 0.0);
    }

    #[test]
    fn miss_outside_box_tests_nothing() {
        let bvh = MeshBvh::build(TriangleMesh::icosphere(Vec3::zeros(), 1.0, 3).unwrap());
        let ray = Ray::towards(Vec3::new(5.0, 5.0, 0.0), Vec3::x());
        let (hit, tests) = bvh.intersect_counted(&ray, 0.0, Facing::Any);
        assert!(hit.is_none());
        assert_eq!(tests, 0);
    }

    #[test]
    fn matches_brute_force() {
        let bvh = MeshBvh::build(TriangleMesh::icosphere(Vec3::new(0.2, -0.1, 0.3), 0.8, 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let o = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let target = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            if (target - o).norm() < 1e-3 {
                continue;
            }
            let ray = Ray::towards(o, target - o);
            for facing in [Facing::Any, Facing::Exiting] {
                let a = bvh.intersect(&ray, 0.0, facing);
                let b = bvh.intersect_brute(&ray, 0.0, facing);
                assert_eq!(a.map(|h| (h.face, h.t)), b.map(|h| (h.face, h.t)));
            }
        }
    }

    #[test]
    fn axis_parallel_ray_through_flat_bounds() {
        let bvh = MeshBvh::build(TriangleMesh::icosphere(Vec3::zeros(), 1.0, 5).unwrap());
        let d = Vec3::new(60f64.to_radians().sin(), 0.0, 60f64.to_radians().cos());
        let ray = Ray { origin: Vec3::new(0.0, 0.0, -1.0), dir: d };
        let a = bvh.intersect(&ray, 1e-9, Facing::Exiting).map(|h| h.face);
        assert!(a.is_some());
        assert_eq!(a, bvh.intersect_brute(&ray, 1e-9, Facing::Exiting).map(|h| h.face));
    }

    #[test]
    fn every_triangle_appears_once() {
        let bvh = MeshBvh::build(TriangleMesh::icosphere(Vec3::zeros(), 1.0, 3).unwrap());
        let mut seen = vec![0; bvh.mesh.triangles.len()];
        for n in &bvh.nodes {
            if n.count > 0 {
                for &f in &bvh.order[n.start as usize..(n.start + n.count) as usize] {
                    seen[f as usize] += 1;
                }
            }
        }
        assert!(seen.iter().all(|&c| c == 1));
    }
}
