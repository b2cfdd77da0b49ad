//! Procedural scenes made of quads, spheres and boxes.

use serde::{Deserialize, Serialize};

use crate::camera::Ray;
use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::probes::Aabb;

pub const CHECKER_CELLS_PER_UNIT: f64 = 8.0;
pub const CHECKER_LIGHT: [f64; 3] = [0.9, 0.9, 0.9];
pub const CHECKER_DARK: [f64; 3] = [0.1, 0.1, 0.1];

/// Color as a deterministic function of world position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Constant { color: [f64; 3] },
    /// 3-D checkerboard; on an axis-aligned plane it is the usual 2-D pattern.
    Checker { cells_per_unit: f64, light: [f64; 3], dark: [f64; 3] },
    /// Linear ramp from `from` at `p·axis = lo` to `to` at `p·axis = hi`, clamped.
    Gradient { axis: [f64; 3], lo: f64, hi: f64, from: [f64; 3], to: [f64; 3] },
}

impl Texture {
    pub fn checker() -> Self {
        Texture::Checker { cells_per_unit: CHECKER_CELLS_PER_UNIT, light: CHECKER_LIGHT, dark: CHECKER_DARK }
    }

    pub fn eval(&self, p: &Vec3) -> [f64; 3] {
        match *self {
            Texture::Constant { color } => color,
            Texture::Checker { cells_per_unit, light, dark } => {
                // Tiny bias keeps points exactly on a cell boundary plane (the
                // floor itself) from flickering between parities.
                let cell = |x: f64| (x * cells_per_unit + 1e-9).floor() as i64;
                if (cell(p.x) + cell(p.y) + cell(p.z)).rem_euclid(2) == 0 {
                    light
                } else {
                    dark
                }
            }
            Texture::Gradient { axis, lo, hi, from, to } => {
                let a = Vec3::from(axis);
                let s = ((p.dot(&a) - lo) / (hi - lo)).clamp(0.0, 1.0);
                [0, 1, 2].map(|c| from[c] + s * (to[c] - from[c]))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Parallelogram `origin + a·edge_u + b·edge_v`, `a, b ∈ [0, 1]`, with
    /// normal `edge_u × edge_v`. Hit from either side.
    Quad { origin: [f64; 3], edge_u: [f64; 3], edge_v: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
    Cuboid { min: [f64; 3], max: [f64; 3] },
}

fn white() -> [f64; 3] {
    [1.0; 3]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Material {
    /// Lit by the constant dome: radiance is `albedo ⊙ dome`.
    Diffuse { texture: Texture },
    Emissive { texture: Texture },
    /// Dielectric with absorption coefficients `sigma` per unit length and a
    /// constant `tint` on transmitted light.
    Glass {
        ior: f64,
        sigma: [f64; 3],
        #[serde(default = "white")]
        tint: [f64; 3],
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub material: Material,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub objects: Vec<SceneObject>,
    /// Radiance of the constant environment dome.
    pub dome: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceHit {
    pub t: f64,
    pub point: Vec3,
    /// Outward normal for solids; `edge_u × edge_v` direction for quads.
    pub normal: Vec3,
    pub object: usize,
}

impl Shape {
    pub fn quad(origin: Vec3, edge_u: Vec3, edge_v: Vec3) -> Self {
        Shape::Quad { origin: origin.into(), edge_u: edge_u.into(), edge_v: edge_v.into() }
    }

    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Shape::Sphere { center: center.into(), radius }
    }

    pub fn cuboid(min: Vec3, max: Vec3) -> Self {
        Shape::Cuboid { min: min.into(), max: max.into() }
    }

    pub fn is_solid(&self) -> bool {
        !matches!(self, Shape::Quad { .. })
    }

    pub fn area(&self) -> f64 {
        match *self {
            Shape::Quad { edge_u, edge_v, .. } => Vec3::from(edge_u).cross(&Vec3::from(edge_v)).norm(),
            Shape::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
            Shape::Cuboid { min, max } => {
                let e = Vec3::from(max) - Vec3::from(min);
                2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
            }
        }
    }

    pub fn bounds(&self) -> Aabb {
        match *self {
            Shape::Quad { origin, edge_u, edge_v } => {
                let (o, u, v) = (Vec3::from(origin), Vec3::from(edge_u), Vec3::from(edge_v));
                let pts = [o, o + u, o + v, o + u + v];
                Aabb::from_points(pts.iter()).expect("four points")
            }
            Shape::Sphere { center, radius } => {
                let c = Vec3::from(center);
                Aabb { min: c.add_scalar(-radius), max: c.add_scalar(radius) }
            }
            Shape::Cuboid { min, max } => Aabb { min: min.into(), max: max.into() },
        }
    }

    /// Entry and exit distances of the line through `ray` for solids, with the
    /// outward normals at both; for quads both entries are the plane hit.
    fn span(&self, ray: &Ray) -> Option<((f64, Vec3), (f64, Vec3))> {
        match *self {
            Shape::Quad { origin, edge_u, edge_v } => {
                let (o, u, v) = (Vec3::from(origin), Vec3::from(edge_u), Vec3::from(edge_v));
                let n = u.cross(&v);
                let denom = ray.dir.dot(&n);
                if denom.abs() < 1e-14 {
                    return None;
                }
                let t = (o - ray.origin).dot(&n) / denom;
                let rel = ray.at(t) - o;
                // Coordinates in the (u, v) basis via the dual vectors.
                let nn = n.norm_squared();
                let a = rel.cross(&v).dot(&n) / nn;
                let b = u.cross(&rel).dot(&n) / nn;
                if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
                    return None;
                }
                let n = n / nn.sqrt();
                Some(((t, n), (t, n)))
            }
            Shape::Sphere { center, radius } => {
                let oc = ray.origin - Vec3::from(center);
                let b = oc.dot(&ray.dir);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                // Stable roots.
                let q = if b > 0.0 { -b - s } else { -b + s };
                let (mut t0, mut t1) = if q != 0.0 { (q, c / q) } else { (0.0, 0.0) };
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                let n = |t: f64| (ray.at(t) - Vec3::from(center)) / radius;
                Some(((t0, n(t0)), (t1, n(t1))))
            }
            Shape::Cuboid { min, max } => {
                let (lo, hi) = (Vec3::from(min), Vec3::from(max));
                let mut t0 = f64::NEG_INFINITY;
                let mut t1 = f64::INFINITY;
                let (mut n0, mut n1) = (Vec3::zeros(), Vec3::zeros());
                for k in 0..3 {
                    if ray.dir[k] == 0.0 {
                        if ray.origin[k] < lo[k] || ray.origin[k] > hi[k] {
                            return None;
                        }
                        continue;
                    }
                    let inv = 1.0 / ray.dir[k];
                    let (mut a, mut b) = ((lo[k] - ray.origin[k]) * inv, (hi[k] - ray.origin[k]) * inv);
                    let mut na = Vec3::zeros();
                    na[k] = -1.0;
                    let mut nb = -na;
                    if a > b {
                        std::mem::swap(&mut a, &mut b);
                        std::mem::swap(&mut na, &mut nb);
                    }
                    if a > t0 {
                        t0 = a;
                        n0 = na;
                    }
                    if b < t1 {
                        t1 = b;
                        n1 = nb;
                    }
                }
                (t0 <= t1).then_some(((t0, n0), (t1, n1)))
            }
        }
    }

    /// Nearest surface crossing with `t > t_min`.
    pub fn intersect(&self, ray: &Ray, t_min: f64) -> Option<(f64, Vec3)> {
        let (a, b) = self.span(ray)?;
        if a.0 > t_min {
            Some(a)
        } else if b.0 > t_min {
            Some(b)
        } else {
            None
        }
    }

    /// Far crossing of a ray that starts inside (or on) a solid.
    pub fn exit(&self, ray: &Ray) -> Option<(f64, Vec3)> {
        let (_, b) = self.span(ray)?;
        (b.0 > 0.0).then_some(b)
    }
}

impl AnalyticScene {
    /// Room `[−2, 2] × [−1, 3] × [−2, 2]` with a checkered floor, gradient walls
    /// and a plain ceiling, under a white dome.
    pub fn checker_room() -> Self {
        Self::box_room(Vec3::new(-2.0, -1.0, -2.0), Vec3::new(2.0, 3.0, 2.0))
    }

    /// Closed box room spanning `min..max` with inward-facing walls.
    pub fn box_room(min: Vec3, max: Vec3) -> Self {
        let e = max - min;
        let (ex, ey, ez) = (Vec3::new(e.x, 0.0, 0.0), Vec3::new(0.0, e.y, 0.0), Vec3::new(0.0, 0.0, e.z));
        let wall = |axis: [f64; 3], lo: f64, hi: f64, from: [f64; 3], to: [f64; 3]| Material::Diffuse {
            texture: Texture::Gradient { axis, lo, hi, from, to },
        };
        let objects = vec![
            // floor (normal +y), ceiling (normal −y)
            SceneObject { shape: Shape::quad(min, ez, ex), material: Material::Diffuse { texture: Texture::checker() } },
            SceneObject {
                shape: Shape::quad(min + ey, ex, ez),
                material: Material::Diffuse { texture: Texture::Constant { color: [0.8, 0.8, 0.75] } },
            },
            // x walls
            SceneObject {
                shape: Shape::quad(min, ey, ez),
                material: wall([0.0, 1.0, 0.0], min.y, max.y, [0.7, 0.2, 0.15], [0.9, 0.6, 0.3]),
            },
            SceneObject {
                shape: Shape::quad(min + ex, ez, ey),
                material: wall([0.0, 1.0, 0.0], min.y, max.y, [0.15, 0.3, 0.7], [0.4, 0.7, 0.9]),
            },
            // z walls
            SceneObject {
                shape: Shape::quad(min, ex, ey),
                material: wall([1.0, 0.0, 0.0], min.x, max.x, [0.2, 0.6, 0.25], [0.7, 0.85, 0.3]),
            },
            SceneObject {
                shape: Shape::quad(min + ez, ey, ex),
                material: wall([1.0, 0.0, 0.0], min.x, max.x, [0.6, 0.55, 0.5], [0.3, 0.25, 0.45]),
            },
        ];
        AnalyticScene { objects, dome: [1.0; 3] }
    }

    pub fn with_object(mut self, shape: Shape, material: Material) -> Self {
        self.objects.push(SceneObject { shape, material });
        self
    }

    pub fn with_glass_sphere(self, center: Vec3, radius: f64, ior: f64, sigma: [f64; 3]) -> Self {
        self.with_object(Shape::sphere(center, radius), Material::Glass { ior, sigma, tint: [1.0; 3] })
    }

    /// Adds a glass sphere whose transmitted light is multiplied by `tint`.
    pub fn with_tinted_glass_sphere(self, center: Vec3, radius: f64, ior: f64, tint: [f64; 3]) -> Self {
        self.with_object(Shape::sphere(center, radius), Material::Glass { ior, sigma: [0.0; 3], tint })
    }

    /// The same scene with every glass object removed.
    pub fn environment(&self) -> Self {
        AnalyticScene {
            objects: self.objects.iter().filter(|o| !matches!(o.material, Material::Glass { .. })).copied().collect(),
            dome: self.dome,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.objects.iter().enumerate() {
            if let Material::Glass { ior, sigma, tint } = o.material {
                if !o.shape.is_solid() {
                    return Err(Error::invalid(format!("object {i}: glass needs a closed shape")));
                }
                if !(ior > 0.0) || sigma.iter().any(|s| !(*s >= 0.0)) {
                    return Err(Error::invalid(format!("object {i}: glass needs ior > 0 and sigma ≥ 0")));
                }
                if tint.iter().any(|t| !(0.0..=1.0).contains(t)) {
                    return Err(Error::invalid(format!("object {i}: glass tint must lie in [0, 1]")));
                }
            }
            match o.shape {
                Shape::Sphere { radius, .. } if !(radius > 0.0) => {
                    return Err(Error::invalid(format!("object {i}: sphere radius must be positive")));
                }
                Shape::Quad { edge_u, edge_v, .. } if Vec3::from(edge_u).cross(&Vec3::from(edge_v)).norm() < 1e-12 => {
                    return Err(Error::invalid(format!("object {i}: degenerate quad")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Bounds of every diffuse or emissive surface.
    pub fn environment_bounds(&self) -> Option<Aabb> {
        let boxes: Vec<Aabb> =
            self.objects.iter().filter(|o| !matches!(o.material, Material::Glass { .. })).map(|o| o.shape.bounds()).collect();
        let pts: Vec<Vec3> = boxes.iter().flat_map(|b| [b.min, b.max]).collect();
        Aabb::from_points(pts.iter())
    }

    pub fn intersect(&self, ray: &Ray, t_min: f64) -> Option<SurfaceHit> {
        let mut best: Option<SurfaceHit> = None;
        for (i, o) in self.objects.iter().enumerate() {
            if let Some((t, normal)) = o.shape.intersect(ray, t_min) {
                if best.map_or(true, |b| t < b.t) {
                    best = Some(SurfaceHit { t, point: ray.at(t), normal, object: i });
                }
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checker_alternates_on_the_floor() {
        let t = Texture::checker();
        let a = t.eval(&Vec3::new(0.01, -1.0, 0.01));
        let b = t.eval(&Vec3::new(0.01 + 0.125, -1.0, 0.01));
        let c = t.eval(&Vec3::new(0.01 + 0.125, -1.0, 0.01 + 0.125));
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn room_walls_face_inward() {
        let room = AnalyticScene::checker_room();
        let center = Vec3::new(0.0, 1.0, 0.0);
        for d in [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y(), Vec3::z(), -Vec3::z()] {
            let hit = room.intersect(&Ray { origin: center, dir: d }, 0.0).unwrap();
            assert!(hit.normal.dot(&d) < 0.0, "{d:?}");
        }
        let hit = room.intersect(&Ray { origin: center, dir: -Vec3::y() }, 0.0).unwrap();
        assert!((hit.t - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_and_cuboid_spans() {
        let s = Shape::sphere(Vec3::zeros(), 1.0);
        let r = Ray { origin: Vec3::new(0.0, 0.0, -3.0), dir: Vec3::z() };
        let (t, n) = s.intersect(&r, 0.0).unwrap();
        assert!((t - 2.0).abs() < 1e-12 && (n + Vec3::z()).norm() < 1e-12);
        let inside = Ray { origin: Vec3::zeros(), dir: Vec3::x() };
        assert!((s.exit(&inside).unwrap().0 - 1.0).abs() < 1e-12);

        let b = Shape::cuboid(Vec3::repeat(-1.0), Vec3::repeat(1.0));
        let (t, n) = b.intersect(&r, 0.0).unwrap();
        assert!((t - 2.0).abs() < 1e-12 && n == -Vec3::z());
        let (t, n) = b.exit(&inside).unwrap();
        assert!((t - 1.0).abs() < 1e-12 && n == Vec3::x());
    }

    #[test]
    fn glass_must_be_closed() {
        let room = AnalyticScene::checker_room().with_object(
            Shape::quad(Vec3::zeros(), Vec3::x(), Vec3::y()),
            Material::Glass { ior: 1.5, sigma: [0.0; 3], tint: [1.0; 3] },
        );
        assert!(room.validate().is_err());
        assert!(AnalyticScene::checker_room().with_glass_sphere(Vec3::zeros(), 0.5, 1.5, [0.0; 3]).validate().is_ok());
    }
}
