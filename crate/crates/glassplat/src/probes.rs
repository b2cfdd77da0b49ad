//! Light-field probes: a lattice of baked color/depth panoramas around a
//! transparent object, bilinear panorama sampling, and the GPRB atlas format.
//!
//! GPRB layout, little-endian:
//!
//! ```text
//! magic    b"GPRB"
//! version  u32 = 1
//! dims     3 × u32
//! bbox     6 × f32   (min xyz, max xyz)
//! H, W     2 × u32
//! per probe, x fastest then y then z:
//!   position 3 × f32
//!   color    H·W·3 × f32, row-major
//!   depth    H·W × f32, +inf for misses
//! ```

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::Vec3;
use crate::panorama::{direction_to_pixel, direction_to_pixel_gradient, render_panorama, Panorama};
use crate::primitive::GaussianPrimitive;

pub const ATLAS_MAGIC: &[u8; 4] = b"GPRB";
pub const ATLAS_VERSION: u32 = 1;
pub const ATLAS_HEADER_BYTES: u64 = 52;
pub const DEFAULT_PANORAMA_HEIGHT: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if !(0..3).all(|k| min[k].is_finite() && max[k].is_finite() && min[k] <= max[k]) {
            return Err(Error::invalid(format!("invalid bounding box {min:?} .. {max:?}")));
        }
        Ok(Aabb { min, max })
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (mut min, mut max) = (first, first);
        for p in it {
            min = min.inf(p);
            max = max.sup(p);
        }
        Some(Aabb { min, max })
    }

    pub fn inflate(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min.add_scalar(-margin),
            max: self.max.add_scalar(margin),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Vec3 {
        0.5 * (self.min + self.max)
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|k| p[k] >= self.min[k] && p[k] <= self.max[k])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub position: Vec3,
    pub panorama: Panorama,
    /// Largest finite depth in the panorama, used when a query hits a miss.
    pub max_depth: Option<f32>,
}

impl Probe {
    pub fn new(position: Vec3, panorama: Panorama) -> Self {
        let max_depth = panorama.max_finite_depth();
        Probe { position, panorama, max_depth }
    }
}

/// Result of sampling a probe along a direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub color: [f64; 3],
    /// Euclidean distance or [`MISS`](crate::panorama::MISS) (as `f64::INFINITY`).
    pub depth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeGrid {
    /// Box whose lattice holds the probes; already inflated by any margin.
    pub bbox: Aabb,
    pub dims: [usize; 3],
    pub probes: Vec<Probe>,
}

fn round_f32(v: &Vec3) -> Vec3 {
    v.map(|c| c as f32 as f64)
}

/// Regular lattice over `bbox` inflated by `margin`, x fastest.
///
/// Coordinates are rounded to `f32` so that an atlas round trip reproduces them exactly.
pub fn place_probes(bbox: &Aabb, dims: [usize; 3], margin: f64) -> Result<Vec<Vec3>> {
    if !(margin >= 0.0) {
        return Err(Error::invalid("probe margin must be non-negative"));
    }
    let b = bbox.inflate(margin);
    let b = Aabb { min: round_f32(&b.min), max: round_f32(&b.max) };
    let ext = b.extent();
    if ext.max() <= 0.0 {
        return Err(Error::invalid("probe bounding box is degenerate"));
    }
    for k in 0..3 {
        if dims[k] == 0 || (ext[k] > 0.0 && dims[k] < 2) {
            return Err(Error::invalid(format!("dims {dims:?} need at least 2 probes along every axis with extent")));
        }
    }
    let coord = |k: usize, i: usize| -> f64 {
        if dims[k] == 1 {
            b.min[k]
        } else {
            b.min[k] + ext[k] * i as f64 / (dims[k] - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                out.push(round_f32(&Vec3::new(coord(0, x), coord(1, y), coord(2, z))));
            }
        }
    }
    Ok(out)
}

impl ProbeGrid {
    /// Bakes one panorama of height `pano_height` per lattice point.
    pub fn bake(scene: &[GaussianPrimitive], bbox: &Aabb, dims: [usize; 3], margin: f64, pano_height: usize) -> Result<Self> {
        let positions = place_probes(bbox, dims, margin)?;
        let probes = positions
            .par_iter()
            .map(|p| render_panorama(scene, p, pano_height).map(|pano| Probe::new(*p, pano)))
            .collect::<Result<Vec<_>>>()?;
        let inflated = bbox.inflate(margin);
        Ok(ProbeGrid {
            bbox: Aabb { min: round_f32(&inflated.min), max: round_f32(&inflated.max) },
            dims,
            probes,
        })
    }

    /// Builds a grid from already-rendered panoramas.
    pub fn from_parts(bbox: Aabb, dims: [usize; 3], probes: Vec<Probe>) -> Result<Self> {
        let g = ProbeGrid { bbox, dims, probes };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let k: usize = self.dims.iter().product();
        if k == 0 || k != self.probes.len() {
            return Err(Error::invalid(format!("{} probes for dims {:?}", self.probes.len(), self.dims)));
        }
        let (h, w) = (self.probes[0].panorama.height, self.probes[0].panorama.width);
        for p in &self.probes {
            p.panorama.validate()?;
            if p.panorama.height != h || p.panorama.width != w {
                return Err(Error::invalid("probe panoramas differ in resolution"));
            }
            if !p.position.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid("probe position is not finite"));
            }
        }
        Ok(())
    }

    pub fn panorama_height(&self) -> usize {
        self.probes[0].panorama.height
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Default IterQuery tolerance: a thousandth of the lattice diagonal.
    pub fn default_epsilon(&self) -> f64 {
        1e-3 * self.bbox.diagonal()
    }

    pub fn save_atlas(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_atlas(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_atlas(&self, w: &mut impl Write) -> Result<()> {
        self.validate()?;
        w.write_all(ATLAS_MAGIC)?;
        w.write_all(&ATLAS_VERSION.to_le_bytes())?;
        for d in self.dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in [&self.bbox.min, &self.bbox.max] {
            for c in v.iter() {
                w.write_all(&(*c as f32).to_le_bytes())?;
            }
        }
        let pano = &self.probes[0].panorama;
        w.write_all(&(pano.height as u32).to_le_bytes())?;
        w.write_all(&(pano.width as u32).to_le_bytes())?;
        for p in &self.probes {
            for c in p.position.iter() {
                w.write_all(&(*c as f32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(p.panorama.color.len() * 16);
            for px in &p.panorama.color {
                for c in px {
                    buf.extend_from_slice(&c.to_le_bytes());
                }
            }
            for d in &p.panorama.depth {
                buf.extend_from_slice(&d.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn load_atlas(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingInput {
                path: path.to_path_buf(),
                hint: "bake an atlas first with `glassplat bake`".into(),
            },
            _ => Error::Io(e),
        })?;
        Self::read_atlas(&mut bytes.as_slice())
    }

    pub fn read_atlas(r: &mut impl Read) -> Result<Self> {
        let mut cur = AtlasReader { inner: r, offset: 0 };
        let magic = cur.bytes::<4>("magic")?;
        if &magic != ATLAS_MAGIC {
            return Err(Error::Format { section: "magic", offset: 0, message: format!("expected GPRB, found {magic:?}") });
        }
        let version = cur.u32("version")?;
        if version != ATLAS_VERSION {
            return Err(Error::Format { section: "version", offset: 4, message: format!("unsupported version {version}") });
        }
        let mut dims = [0usize; 3];
        for d in dims.iter_mut() {
            *d = cur.u32("dims")? as usize;
        }
        let mut corners = [0.0f64; 6];
        for c in corners.iter_mut() {
            *c = cur.f32("bbox")? as f64;
        }
        let height = cur.u32("panorama size")? as usize;
        let width = cur.u32("panorama size")? as usize;
        if dims.iter().any(|&d| d == 0) || height == 0 || width != 2 * height {
            return Err(Error::Format {
                section: "header",
                offset: 8,
                message: format!("bad dims {dims:?} or panorama size {width}×{height}"),
            });
        }
        let bbox = Aabb::new(
            Vec3::new(corners[0], corners[1], corners[2]),
            Vec3::new(corners[3], corners[4], corners[5]),
        )
        .map_err(|e| Error::Format { section: "bbox", offset: 20, message: e.to_string() })?;

        let n = width * height;
        let count: usize = dims.iter().product();
        let mut probes = Vec::with_capacity(count);
        for _ in 0..count {
            let mut pos = Vec3::zeros();
            for k in 0..3 {
                pos[k] = cur.f32("probe position")? as f64;
            }
            let mut pano = Panorama::empty(height);
            let raw = cur.vec(n * 12, "probe color")?;
            for (i, px) in pano.color.iter_mut().enumerate() {
                for c in 0..3 {
                    let o = (i * 3 + c) * 4;
                    px[c] = f32::from_le_bytes(raw[o..o + 4].try_into().unwrap());
                }
            }
            let depth_offset = cur.offset;
            let raw = cur.vec(n * 4, "probe depth")?;
            for (i, d) in pano.depth.iter_mut().enumerate() {
                *d = f32::from_le_bytes(raw[i * 4..i * 4 + 4].try_into().unwrap());
                if !(*d > 0.0) {
                    return Err(Error::Format {
                        section: "probe depth",
                        offset: depth_offset + 4 * i as u64,
                        message: format!("depth {} is neither positive nor the miss sentinel", *d),
                    });
                }
            }
            probes.push(Probe::new(pos, pano));
        }
        let mut tail = [0u8; 1];
        if cur.inner.read(&mut tail)? != 0 {
            return Err(Error::Format { section: "trailer", offset: cur.offset, message: "unexpected bytes after the last probe".into() });
        }
        ProbeGrid::from_parts(bbox, dims, probes)
    }
}

struct AtlasReader<'a, R: Read> {
    inner: &'a mut R,
    offset: u64,
}

impl<R: Read> AtlasReader<'_, R> {
    fn fill(&mut self, buf: &mut [u8], section: &'static str) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => Error::Format {
                section,
                offset: self.offset,
                message: format!("file truncated while reading {} bytes", buf.len()),
            },
            _ => Error::Io(e),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn bytes<const N: usize>(&mut self, section: &'static str) -> Result<[u8; N]> {
        let mut b = [0u8; N];
        self.fill(&mut b, section)?;
        Ok(b)
    }

    fn vec(&mut self, n: usize, section: &'static str) -> Result<Vec<u8>> {
        let mut b = vec![0u8; n];
        self.fill(&mut b, section)?;
        Ok(b)
    }

    fn u32(&mut self, section: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes::<4>(section)?))
    }

    fn f32(&mut self, section: &'static str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.bytes::<4>(section)?))
    }
}

/// Expected atlas size in bytes.
pub fn atlas_size(dims: [usize; 3], height: usize) -> u64 {
    let k = dims.iter().product::<usize>() as u64;
    let n = (2 * height * height) as u64;
    ATLAS_HEADER_BYTES + k * (12 + n * 16)
}

/// The four texels around continuous coordinates and their bilinear weights.
/// Columns wrap; rows clamp at the poles.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Footprint {
    pub texels: [usize; 4],
    pub weights: [f64; 4],
    /// d(weights)/du and d(weights)/dv.
    pub dw_du: [f64; 4],
    pub dw_dv: [f64; 4],
}

pub(crate) fn footprint(u: f64, v: f64, width: usize, height: usize) -> Footprint {
    let x = u - 0.5;
    let x0 = x.floor();
    let fx = x - x0;
    let c0 = (x0 as i64).rem_euclid(width as i64) as usize;
    let c1 = (c0 + 1) % width;

    let y = v - 0.5;
    let (r0, r1, fy, dfy) = if height == 1 {
        (0, 0, 0.0, 0.0)
    } else if y <= 0.0 {
        (0, 1, 0.0, 0.0)
    } else if y >= (height - 1) as f64 {
        (height - 2, height - 1, 1.0, 0.0)
    } else {
        let y0 = (y.floor() as usize).min(height - 2);
        (y0, y0 + 1, y - y0 as f64, 1.0)
    };
    Footprint {
        texels: [r0 * width + c0, r0 * width + c1, r1 * width + c0, r1 * width + c1],
        weights: [(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy],
        dw_du: [-(1.0 - fy), 1.0 - fy, -fy, fy],
        dw_dv: [-(1.0 - fx) * dfy, -fx * dfy, (1.0 - fx) * dfy, fx * dfy],
    }
}

/// Bilinear depth with the sentinel rule: any miss among the four texels
/// falls back to the nearest finite one.
fn depth_from(pano: &Panorama, f: &Footprint) -> (f64, bool) {
    let ds = f.texels.map(|t| pano.depth[t]);
    if ds.iter().all(|d| d.is_finite()) {
        return ((0..4).map(|k| f.weights[k] * ds[k] as f64).sum(), true);
    }
    let mut best: Option<(f64, f32)> = None;
    for k in 0..4 {
        if ds[k].is_finite() && best.map_or(true, |(w, _)| f.weights[k] > w) {
            best = Some((f.weights[k], ds[k]));
        }
    }
    (best.map_or(f64::INFINITY, |(_, d)| d as f64), false)
}

impl Probe {
    pub fn sample(&self, d: &Vec3) -> ProbeSample {
        let p = &self.panorama;
        let (u, v) = direction_to_pixel(d, p.width, p.height);
        let f = footprint(u, v, p.width, p.height);
        let mut color = [0.0; 3];
        for k in 0..4 {
            let c = p.color[f.texels[k]];
            for ch in 0..3 {
                color[ch] += f.weights[k] * c[ch] as f64;
            }
        }
        ProbeSample { color, depth: depth_from(p, &f).0 }
    }

    pub fn sample_depth(&self, d: &Vec3) -> f64 {
        let p = &self.panorama;
        let (u, v) = direction_to_pixel(d, p.width, p.height);
        depth_from(p, &footprint(u, v, p.width, p.height)).0
    }

    /// Sample plus its directional derivative along `dd` (a tangent of the unit direction).
    /// Depth derivatives are zero where the sentinel fallback is active.
    pub fn sample_jvp(&self, d: &Vec3, dd: &Vec3) -> (ProbeSample, [f64; 3], f64) {
        let p = &self.panorama;
        let (u, v) = direction_to_pixel(d, p.width, p.height);
        let (gu, gv) = direction_to_pixel_gradient(d, p.width, p.height);
        let (du, dv) = (gu.dot(dd), gv.dot(dd));
        let f = footprint(u, v, p.width, p.height);
        let mut color = [0.0; 3];
        let mut dcolor = [0.0; 3];
        for k in 0..4 {
            let c = p.color[f.texels[k]];
            let dw = f.dw_du[k] * du + f.dw_dv[k] * dv;
            for ch in 0..3 {
                color[ch] += f.weights[k] * c[ch] as f64;
                dcolor[ch] += dw * c[ch] as f64;
            }
        }
        let (depth, smooth) = depth_from(p, &f);
        let ddepth = if smooth {
            (0..4).map(|k| (f.dw_du[k] * du + f.dw_dv[k] * dv) * p.depth[f.texels[k]] as f64).sum()
        } else {
            0.0
        };
        (ProbeSample { color, depth }, dcolor, ddepth)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panorama::{pixel_to_direction, MISS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_cube() -> Aabb {
        Aabb::new(Vec3::zeros(), Vec3::repeat(1.0)).unwrap()
    }

    #[test]
    fn lattice_examples() {
        let p = place_probes(&unit_cube(), [2, 2, 2], 0.0).unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(p[0], Vec3::zeros());
        assert_eq!(p[7], Vec3::repeat(1.0));
        assert_eq!(p[1], Vec3::x());
        let p = place_probes(&unit_cube(), [4, 4, 4], 0.0).unwrap();
        assert_eq!(p.len(), 64);
        assert!((p[1].x - 1.0 / 3.0).abs() < 1e-7);
        let p = place_probes(&unit_cube(), [2, 2, 2], 0.1).unwrap();
        assert!((p[0].x + 0.1).abs() < 1e-7 && (p[7].z - 1.1).abs() < 1e-7);
        let flat = Aabb::new(Vec3::zeros(), Vec3::zeros()).unwrap();
        assert!(place_probes(&flat, [2, 2, 2], 0.0).is_err());
        assert!(place_probes(&unit_cube(), [1, 2, 2], 0.0).is_err());
    }

    fn ramp_panorama(h: usize) -> Panorama {
        let mut p = Panorama::empty(h);
        for row in 0..h {
            for col in 0..2 * h {
                let i = p.index(col, row);
                p.color[i] = [col as f32, row as f32, 1.0];
                p.depth[i] = 1.0 + col as f32;
            }
        }
        p
    }

    #[test]
    fn texel_center_reproduces_values() {
        let probe = Probe::new(Vec3::zeros(), ramp_panorama(8));
        let d = pixel_to_direction(5.5, 3.5, 16, 8);
        let s = probe.sample(&d);
        assert!((s.color[0] - 5.0).abs() < 1e-9 && (s.color[1] - 3.0).abs() < 1e-9);
        assert!((s.depth - 6.0).abs() < 1e-9);
    }

    #[test]
    fn midway_depth_blends() {
        let mut pano = Panorama::empty(8);
        for i in 0..pano.depth.len() {
            pano.depth[i] = if i % 2 == 0 { 2.0 } else { 4.0 };
        }
        let probe = Probe::new(Vec3::zeros(), pano);
        let d = pixel_to_direction(5.0, 3.5, 16, 8);
        assert!((probe.sample(&d).depth - 3.0).abs() < 1e-9);
    }

    #[test]
    fn seam_sampling_matches_rotated_panorama() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut pano = Panorama::empty(8);
        for i in 0..pano.color.len() {
            pano.color[i] = [rng.gen(), rng.gen(), rng.gen()];
            pano.depth[i] = rng.gen_range(1.0..5.0);
        }
        let a = Probe::new(Vec3::zeros(), pano.clone());
        let b = Probe::new(Vec3::zeros(), pano.rotated_columns(8));
        for u in [15.6, 15.9, 0.1, 0.3, 0.5] {
            let da = pixel_to_direction(u, 4.2, 16, 8);
            let db = pixel_to_direction((u + 8.0) % 16.0, 4.2, 16, 8);
            let (sa, sb) = (a.sample(&da), b.sample(&db));
            for c in 0..3 {
                assert!((sa.color[c] - sb.color[c]).abs() < 1e-5, "u={u}");
            }
            assert!((sa.depth - sb.depth).abs() < 1e-5);
        }
    }

    #[test]
    fn sentinel_falls_back_to_nearest_finite() {
        let mut pano = Panorama::empty(8);
        pano.depth.iter_mut().for_each(|d| *d = 3.0);
        let i = pano.index(5, 3);
        pano.depth[i] = MISS;
        let probe = Probe::new(Vec3::zeros(), pano);
        let d = pixel_to_direction(5.4, 3.6, 16, 8);
        assert_eq!(probe.sample(&d).depth, 3.0);
        assert_eq!(Probe::new(Vec3::zeros(), Panorama::empty(4)).sample(&Vec3::z()).depth, f64::INFINITY);
    }

    #[test]
    fn depth_stays_within_contributing_texels() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut pano = Panorama::empty(16);
        for d in pano.depth.iter_mut() {
            *d = if rng.gen_bool(0.1) { MISS } else { rng.gen_range(0.5..10.0) };
        }
        let probe = Probe::new(Vec3::zeros(), pano.clone());
        for _ in 0..2000 {
            let d = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            let (u, v) = direction_to_pixel(&d, 32, 16);
            let f = footprint(u, v, 32, 16);
            let finite: Vec<f64> = f.texels.iter().map(|&t| pano.depth[t] as f64).filter(|x| x.is_finite()).collect();
            let s = probe.sample(&d).depth;
            if finite.is_empty() {
                assert!(s.is_infinite());
            } else {
                let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = finite.iter().copied().fold(0.0, f64::max);
                assert!(s >= lo - 1e-9 && s <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn sample_jvp_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut pano = Panorama::empty(16);
        for i in 0..pano.color.len() {
            pano.color[i] = [rng.gen(), rng.gen(), rng.gen()];
            pano.depth[i] = rng.gen_range(1.0..5.0);
        }
        let probe = Probe::new(Vec3::zeros(), pano);
        let d = Vec3::new(0.3, 0.2, 0.8).normalize();
        let t = Vec3::new(0.1, -0.4, 0.3);
        let t = t - d * d.dot(&t);
        let (_, dc, dd) = probe.sample_jvp(&d, &t);
        let h = 1e-7;
        let a = probe.sample(&(d + t * h).normalize());
        let b = probe.sample(&(d - t * h).normalize());
        assert!(((a.depth - b.depth) / (2.0 * h) - dd).abs() < 1e-4 * (1.0 + dd.abs()));
        for c in 0..3 {
            assert!(((a.color[c] - b.color[c]) / (2.0 * h) - dc[c]).abs() < 1e-4 * (1.0 + dc[c].abs()));
        }
    }

    fn tiny_grid() -> ProbeGrid {
        let scene = vec![GaussianPrimitive::isotropic(Vec3::new(0.5, 0.5, 3.0), 0.3, 0.9, [0.2, 0.5, 0.8])];
        ProbeGrid::bake(&scene, &unit_cube(), [2, 2, 2], 0.0, 8).unwrap()
    }

    #[test]
    fn atlas_round_trip_is_exact() {
        let g = tiny_grid();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.gprb");
        g.save_atlas(&path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), atlas_size([2, 2, 2], 8));
        let back = ProbeGrid::load_atlas(&path).unwrap();
        assert_eq!(back, g);
        let path2 = dir.path().join("b.gprb");
        back.save_atlas(&path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn atlas_size_arithmetic() {
        assert_eq!(atlas_size([2, 2, 2], 512), 52 + 8 * 4 * 512 * 1024 * 4 + 8 * 12);
    }

    #[test]
    fn atlas_corruption_is_reported() {
        let g = tiny_grid();
        let mut bytes = Vec::new();
        g.write_atlas(&mut bytes).unwrap();

        let cut = &bytes[..bytes.len() - 10];
        match ProbeGrid::read_atlas(&mut &cut[..]) {
            Err(Error::Format { section, .. }) => assert_eq!(section, "probe depth"),
            other => panic!("expected format error, got {other:?}"),
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(ProbeGrid::read_atlas(&mut &bad[..]), Err(Error::Format { section: "magic", offset: 0, .. })));
        let mut bad = bytes.clone();
        bad[4] = 2;
        assert!(matches!(ProbeGrid::read_atlas(&mut &bad[..]), Err(Error::Format { section: "version", .. })));
        match ProbeGrid::read_atlas(&mut &bytes[..30]) {
            Err(Error::Format { section, offset, .. }) => {
                assert_eq!(section, "bbox");
                assert_eq!(offset, 28);
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn empty_scene_bakes_misses() {
        let g = ProbeGrid::bake(&[], &unit_cube(), [2, 2, 2], 0.0, 4).unwrap();
        assert!(g.probes.iter().all(|p| p.panorama.depth.iter().all(|&d| d == MISS)));
    }

    #[test]
    fn bake_ignores_input_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut scene: Vec<_> = (0..30)
            .map(|_| {
                let p = Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(2.0..4.0));
                GaussianPrimitive::isotropic(p, rng.gen_range(0.1..0.5), 0.8, [rng.gen(), rng.gen(), rng.gen()])
            })
            .collect();
        let a = ProbeGrid::bake(&scene, &unit_cube(), [2, 2, 2], 0.0, 8).unwrap();
        scene.reverse();
        let b = ProbeGrid::bake(&scene, &unit_cube(), [2, 2, 2], 0.0, 8).unwrap();
        assert_eq!(a, b);
    }
}
