//! Triangle meshes used as refraction proxies, with OBJ input and output.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vec3;

pub const MIN_FACE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// Unit face normals following the counter-clockwise winding.
    pub face_normals: Vec<Vec3>,
    /// Optional per-corner shading normals.
    pub corner_normals: Option<Vec<[Vec3; 3]>>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>, corner_normals: Option<Vec<[Vec3; 3]>>) -> Result<Self> {
        let mut face_normals = Vec::with_capacity(triangles.len());
        for (f, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as usize >= vertices.len()) {
                return Err(Error::invalid(format!("triangle {f} references a missing vertex")));
            }
            let [a, b, c] = tri.map(|i| vertices[i as usize]);
            let n = (b - a).cross(&(c - a));
            if !(0.5 * n.norm() > MIN_FACE_AREA) {
                return Err(Error::invalid(format!("triangle {f} is degenerate")));
            }
            face_normals.push(n.normalize());
        }
        if let Some(cn) = &corner_normals {
            if cn.len() != triangles.len() {
                return Err(Error::invalid("corner normal count does not match triangle count"));
            }
        }
        Ok(TriangleMesh { vertices, triangles, face_normals, corner_normals })
    }

    pub fn corners(&self, f: usize) -> [Vec3; 3] {
        self.triangles[f].map(|i| self.vertices[i as usize])
    }

    /// Shading normal at barycentric `(b1, b2)` of face `f`.
    pub fn shading_normal(&self, f: usize, b1: f64, b2: f64) -> Vec3 {
        match &self.corner_normals {
            Some(cn) => {
                let [n0, n1, n2] = cn[f];
                let n = n0 * (1.0 - b1 - b2) + n1 * b1 + n2 * b2;
                let len = n.norm();
                if len > 1e-12 {
                    n / len
                } else {
                    self.face_normals[f]
                }
            }
            None => self.face_normals[f],
        }
    }

    /// Shading normal and its derivative along a hit-point displacement `dx`
    /// that stays in the face plane.
    pub fn shading_normal_jvp(&self, f: usize, b1: f64, b2: f64, dx: &Vec3) -> (Vec3, Vec3) {
        let Some(cn) = &self.corner_normals else {
            return (self.face_normals[f], Vec3::zeros());
        };
        let [a, b, c] = self.corners(f);
        let (e1, e2) = (b - a, c - a);
        let nf = e1.cross(&e2);
        let area2 = nf.norm_squared();
        let db1 = dx.cross(&e2).dot(&nf) / area2;
        let db2 = e1.cross(dx).dot(&nf) / area2;
        let [n0, n1, n2] = cn[f];
        let raw = n0 * (1.0 - b1 - b2) + n1 * b1 + n2 * b2;
        let draw = (n1 - n0) * db1 + (n2 - n0) * db2;
        let len = raw.norm();
        let n = raw / len;
        (n, (draw - n * n.dot(&draw)) / len)
    }

    pub fn bounds(&self) -> (Vec3, Vec3) {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn edge_count(&self) -> usize {
        let mut edges = std::collections::HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
            }
        }
        edges.len()
    }

    /// Icosphere from repeated 4-way subdivision of an icosahedron, with
    /// radial corner normals.
    pub fn icosphere(center: Vec3, radius: f64, subdivisions: usize) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::invalid("sphere radius must be positive"));
        }
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        let mut verts: Vec<Vec3> = [
            (-1.0, phi, 0.0),
            (1.0, phi, 0.0),
            (-1.0, -phi, 0.0),
            (1.0, -phi, 0.0),
            (0.0, -1.0, phi),
            (0.0, 1.0, phi),
            (0.0, -1.0, -phi),
            (0.0, 1.0, -phi),
            (phi, 0.0, -1.0),
            (phi, 0.0, 1.0),
            (-phi, 0.0, -1.0),
            (-phi, 0.0, 1.0),
        ]
        .iter()
        .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
        .collect();
        let mut faces: Vec<[u32; 3]> = vec![
            [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
            [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
            [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
            [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
        ];
        for _ in 0..subdivisions {
            let mut midpoint: HashMap<(u32, u32), u32> = HashMap::new();
            let mut mid = |a: u32, b: u32, verts: &mut Vec<Vec3>| -> u32 {
                *midpoint.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    verts.push(((verts[a as usize] + verts[b as usize]) * 0.5).normalize());
                    (verts.len() - 1) as u32
                })
            };
            let mut next = Vec::with_capacity(faces.len() * 4);
            for [a, b, c] in faces {
                let ab = mid(a, b, &mut verts);
                let bc = mid(b, c, &mut verts);
                let ca = mid(c, a, &mut verts);
                next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
            }
            faces = next;
        }
        let normals = faces.iter().map(|t| t.map(|i| verts[i as usize])).collect();
        let positions = verts.iter().map(|v| center + v * radius).collect();
        TriangleMesh::new(positions, faces, Some(normals))
    }

    pub fn write_obj(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "# glassplat proxy mesh")?;
        for v in &self.vertices {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        match &self.corner_normals {
            Some(cn) => {
                for corners in cn {
                    for n in corners {
                        writeln!(w, "vn {} {} {}", n.x, n.y, n.z)?;
                    }
                }
                for (f, t) in self.triangles.iter().enumerate() {
                    let k = 3 * f + 1;
                    writeln!(w, "f {}//{} {}//{} {}//{}", t[0] + 1, k, t[1] + 1, k + 1, t[2] + 1, k + 2)?;
                }
            }
            None => {
                for t in &self.triangles {
                    writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `v`, `vn` and `f` records. Polygons are fan-triangulated; texture
    /// coordinates and other records are ignored. Normals are used only when
    /// every face corner has one.
    pub fn read_obj(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput {
                path: path.to_path_buf(),
                hint: "generate the proxy mesh with `glassplat synth`".into(),
            },
            _ => Error::Io(e),
        })?;
        let mut verts = Vec::new();
        let mut normals = Vec::new();
        let mut tris = Vec::new();
        let mut corner_normals: Vec<[Vec3; 3]> = Vec::new();
        let mut all_normals = true;
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            let bad = |m: String| Error::Parse { line: lineno + 1, message: m };
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("v") | Some("vn") => {
                    let xs: Vec<f64> = parts.take(3).map(|s| s.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| bad(e.to_string()))?;
                    if xs.len() != 3 {
                        return Err(bad("expected three coordinates".into()));
                    }
                    let v = Vec3::new(xs[0], xs[1], xs[2]);
                    if line.starts_with("vn") {
                        normals.push(v);
                    } else {
                        verts.push(v);
                    }
                }
                Some("f") => {
                    let mut corners = Vec::new();
                    for tok in parts {
                        let mut it = tok.split('/');
                        let resolve = |s: Option<&str>, len: usize| -> Result<Option<usize>> {
                            match s {
                                None | Some("") => Ok(None),
                                Some(s) => {
                                    let i: i64 = s.parse().map_err(|_| bad(format!("bad index {s:?}")))?;
                                    let idx = if i < 0 { len as i64 + i } else { i - 1 };
                                    if idx < 0 || idx as usize >= len {
                                        return Err(bad(format!("index {i} out of range")));
                                    }
                                    Ok(Some(idx as usize))
                                }
                            }
                        };
                        let v = resolve(it.next(), verts.len())?.ok_or_else(|| bad("face corner without a vertex".into()))?;
                        let _ = it.next();
                        let n = resolve(it.next(), normals.len())?;
                        corners.push((v, n));
                    }
                    if corners.len() < 3 {
                        return Err(bad("face with fewer than three corners".into()));
                    }
                    for k in 1..corners.len() - 1 {
                        let tri = [corners[0], corners[k], corners[k + 1]];
                        tris.push(tri.map(|(v, _)| v as u32));
                        match (tri[0].1, tri[1].1, tri[2].1) {
                            (Some(a), Some(b), Some(c)) => corner_normals.push([normals[a], normals[b], normals[c]].map(|n: Vec3| n.normalize())),
                            _ => all_normals = false,
                        }
                    }
                }
                _ => {}
            }
        }
        let cn = (all_normals && !tris.is_empty()).then_some(corner_normals);
        TriangleMesh::new(verts, tris, cn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_topology_and_orientation() {
        for s in 0..4 {
            let m = TriangleMesh::icosphere(Vec3::new(1.0, 2.0, 3.0), 0.5, s).unwrap();
            let (v, e, f) = (m.vertices.len() as i64, m.edge_count() as i64, m.triangles.len() as i64);
            assert_eq!(v - e + f, 2);
            for (k, n) in m.face_normals.iter().enumerate() {
                let [a, b, c] = m.corners(k);
                let centroid = (a + b + c) / 3.0 - Vec3::new(1.0, 2.0, 3.0);
                assert!(n.dot(&centroid) > 0.0);
            }
        }
    }

    #[test]
    fn icosphere_radial_error_shrinks() {
        let mut prev = f64::INFINITY;
        for s in 1..5 {
            let m = TriangleMesh::icosphere(Vec3::zeros(), 1.0, s).unwrap();
            // deepest point of each face is near its centroid
            let dev = (0..m.triangles.len())
                .map(|k| {
                    let [a, b, c] = m.corners(k);
                    1.0 - ((a + b + c) / 3.0).norm()
                })
                .fold(0.0, f64::max);
            assert!(dev < prev);
            if s == 3 {
                assert!(dev < 0.01, "{dev}");
            }
            prev = dev;
        }
    }

    #[test]
    fn rejects_bad_faces() {
        let v = vec![Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
        assert!(TriangleMesh::new(v.clone(), vec![[0, 1, 2]], None).is_err());
        assert!(TriangleMesh::new(v, vec![[0, 1, 5]], None).is_err());
    }

    #[test]
    fn obj_round_trip() {
        let m = TriangleMesh::icosphere(Vec3::zeros(), 1.0, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.obj");
        m.write_obj(&p).unwrap();
        let back = TriangleMesh::read_obj(&p).unwrap();
        assert_eq!(back.triangles, m.triangles);
        for (a, b) in back.vertices.iter().zip(&m.vertices) {
            assert!((a - b).norm() < 1e-12);
        }
        assert!(back.corner_normals.is_some());
    }

    #[test]
    fn obj_quads_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("q.obj");
        std::fs::write(&p, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n").unwrap();
        let m = TriangleMesh::read_obj(&p).unwrap();
        assert_eq!(m.triangles.len(), 2);
        assert!(m.corner_normals.is_none());
        std::fs::write(&p, "v 0 0 0\nf 1 2 3\n").unwrap();
        assert!(matches!(TriangleMesh::read_obj(&p), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(TriangleMesh::read_obj(&dir.path().join("none.obj")), Err(Error::MissingInput { .. })));
    }

    #[test]
    fn shading_normal_jvp_matches_finite_differences() {
        let m = TriangleMesh::icosphere(Vec3::zeros(), 1.0, 1).unwrap();
        let [a, b, c] = m.corners(3);
        let (b1, b2) = (0.3, 0.2);
        let x = a * (1.0 - b1 - b2) + b * b1 + c * b2;
        let dx = (b - a) * 0.4 - (c - a) * 0.7;
        let (_, dn) = m.shading_normal_jvp(3, b1, b2, &dx);
        let bary = |p: Vec3| {
            let (e1, e2) = (b - a, c - a);
            let nf = e1.cross(&e2);
            let q = p - a;
            (q.cross(&e2).dot(&nf) / nf.norm_squared(), e1.cross(&q).dot(&nf) / nf.norm_squared())
        };
        let h = 1e-6;
        let (p1, p2) = bary(x + dx * h);
        let (m1, m2) = bary(x - dx * h);
        let fd = (m.shading_normal(3, p1, p2) - m.shading_normal(3, m1, m2)) / (2.0 * h);
        assert!((fd - dn).norm() < 1e-6);
    }
}
