//! Gaussian scenes as PLY files.
//!
//! The writer emits binary little-endian float32 vertices with the usual 3D-GS
//! properties (`x y z`, `f_dc_*`, `f_rest_*`, logit `opacity`, log `scale_*`,
//! `rot_*` as w x y z) followed by the transparent-material extension
//! `t_transparency t_ior t_roughness t_metallic t_base_r/g/b t_normal_x/y/z`.
//!
//! The reader takes ascii and binary files of either endianness. Files without
//! the extension load as opaque white dielectrics (`t = 0`, `η = 1.5`) whose
//! normal is the Gaussian's thinnest axis.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::{Quat, Vec3};
use crate::primitive::{GaussianPrimitive, TransparentAttributes};
use crate::sh::{ShCoeffs, SH_COEFFS};

/// Higher-order SH coefficients per channel.
const REST_PER_CHANNEL: usize = SH_COEFFS - 1;
/// Unit vectors this far from length one are renormalized on load; closer
/// ones are kept as stored so that a save of a load reproduces the file.
const RENORMALIZE_TOLERANCE: f64 = 1e-6;

const EXTENSION: [&str; 10] = [
    "t_transparency",
    "t_ior",
    "t_roughness",
    "t_metallic",
    "t_base_r",
    "t_base_g",
    "t_base_b",
    "t_normal_x",
    "t_normal_y",
    "t_normal_z",
];

fn property_names() -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z"].iter().map(|s| s.to_string()).collect();
    names.extend((0..3).map(|i| format!("f_dc_{i}")));
    names.extend((0..3 * REST_PER_CHANNEL).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names.extend(EXTENSION.iter().map(|s| s.to_string()));
    names
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn encode(p: &GaussianPrimitive) -> Vec<f32> {
    let mut v = Vec::with_capacity(property_names().len());
    v.extend(p.position.iter().map(|&x| x as f32));
    v.extend((0..3).map(|c| p.sh[0][c] as f32));
    // f_rest is channel-major: all red coefficients, then green, then blue
    for c in 0..3 {
        v.extend((1..SH_COEFFS).map(|k| p.sh[k][c] as f32));
    }
    v.push(logit(p.opacity) as f32);
    v.extend(p.scale.iter().map(|&s| s.ln() as f32));
    let q = p.rotation.coords;
    v.extend([q.w, q.x, q.y, q.z].map(|x| x as f32));
    let a = &p.attrs;
    v.extend([a.transparency, a.ior, a.roughness, a.metallic].map(|x| x as f32));
    v.extend(a.base_color.map(|x| x as f32));
    v.extend(a.normal.iter().map(|&x| x as f32));
    v
}

pub fn write_ply(path: &Path, primitives: &[GaussianPrimitive]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply_to(&mut w, primitives)?;
    w.flush()?;
    Ok(())
}

pub fn write_ply_to(w: &mut impl Write, primitives: &[GaussianPrimitive]) -> Result<()> {
    let mut header = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", primitives.len());
    for name in property_names() {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())?;
    for p in primitives {
        for x in encode(p) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    Little,
    Big,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn decode(self, b: &[u8], enc: Encoding) -> f64 {
        macro_rules! num {
            ($t:ty, $n:literal) => {{
                let a: [u8; $n] = b[..$n].try_into().expect("slice length checked by caller");
                (if enc == Encoding::Big { <$t>::from_be_bytes(a) } else { <$t>::from_le_bytes(a) }) as f64
            }};
        }
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => num!(i16, 2),
            Scalar::U16 => num!(u16, 2),
            Scalar::I32 => num!(i32, 4),
            Scalar::U32 => num!(u32, 4),
            Scalar::F32 => num!(f32, 4),
            Scalar::F64 => num!(f64, 8),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    lines: usize,
    bytes: u64,
}

fn parse_header(r: &mut impl BufRead) -> Result<Header> {
    let mut line = String::new();
    let mut lines = 0;
    let mut bytes = 0u64;
    let mut next = |line: &mut String, lines: &mut usize| -> Result<bool> {
        line.clear();
        let n = r.read_line(line)?;
        bytes += n as u64;
        *lines += 1;
        Ok(n > 0)
    };
    if !next(&mut line, &mut lines)? || line.trim_end() != "ply" {
        return Err(Error::Parse { line: 1, message: "missing `ply` magic line".into() });
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        if !next(&mut line, &mut lines)? {
            return Err(Error::Parse { line: lines, message: "header ended without `end_header`".into() });
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let bad = |m: &str| Error::Parse { line: lines, message: m.to_string() };
        match words.as_slice() {
            ["end_header"] => break,
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", f, "1.0"] => {
                encoding = Some(match *f {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::Little,
                    "binary_big_endian" => Encoding::Big,
                    other => return Err(bad(&format!("unknown format `{other}`"))),
                });
            }
            ["element", name, count] => {
                let count = count.parse().map_err(|_| bad(&format!("bad element count `{count}`")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new() });
            }
            ["property", "list", c, i, _name] => {
                let (Some(count), Some(item)) = (Scalar::parse(c), Scalar::parse(i)) else {
                    return Err(bad("unknown list property type"));
                };
                elements.last_mut().ok_or_else(|| bad("property before any element"))?.properties.push(Property::List { count, item });
            }
            ["property", ty, name] => {
                let ty = Scalar::parse(ty).ok_or_else(|| bad(&format!("unknown property type `{ty}`")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| bad("property before any element"))?
                    .properties
                    .push(Property::Scalar { name: name.to_string(), ty });
            }
            _ => return Err(bad(&format!("unrecognized header line `{}`", line.trim_end()))),
        }
    }
    let encoding = encoding.ok_or(Error::Parse { line: lines, message: "no `format` line".into() })?;
    Ok(Header { encoding, elements, lines, bytes })
}

/// Raw vertex table: property names and one row of values per vertex.
struct Table {
    names: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_binary(r: &mut impl Read, h: &Header) -> Result<Table> {
    let mut offset = h.bytes;
    let mut table = None;
    for el in &h.elements {
        let is_vertex = el.name == "vertex";
        let names: Vec<String> = el
            .properties
            .iter()
            .filter_map(|p| match p {
                Property::Scalar { name, .. } => Some(name.clone()),
                Property::List { .. } => None,
            })
            .collect();
        let mut rows = Vec::with_capacity(if is_vertex { el.count } else { 0 });
        let mut buf = [0u8; 8];
        for _ in 0..el.count {
            let mut row = Vec::with_capacity(names.len());
            for p in &el.properties {
                let mut take = |ty: Scalar, offset: &mut u64| -> Result<f64> {
                    let n = ty.size();
                    r.read_exact(&mut buf[..n]).map_err(|e| Error::Format {
                        section: "ply body",
                        offset: *offset,
                        message: format!("element `{}`: {e}", el.name),
                    })?;
                    *offset += n as u64;
                    Ok(ty.decode(&buf, h.encoding))
                };
                match *p {
                    Property::Scalar { ty, .. } => row.push(take(ty, &mut offset)?),
                    Property::List { count, item } => {
                        let n = take(count, &mut offset)?;
                        for _ in 0..n as usize {
                            take(item, &mut offset)?;
                        }
                    }
                }
            }
            if is_vertex {
                rows.push(row);
            }
        }
        if is_vertex {
            table = Some(Table { names, rows });
        }
    }
    table.ok_or(Error::Format { section: "ply header", offset: 0, message: "no `vertex` element".into() })
}

fn read_ascii(r: &mut impl BufRead, h: &Header) -> Result<Table> {
    let mut line_no = h.lines;
    let mut table = None;
    let mut line = String::new();
    for el in &h.elements {
        let is_vertex = el.name == "vertex";
        let names: Vec<String> = el
            .properties
            .iter()
            .filter_map(|p| match p {
                Property::Scalar { name, .. } => Some(name.clone()),
                Property::List { .. } => None,
            })
            .collect();
        let mut rows = Vec::new();
        for _ in 0..el.count {
            line.clear();
            line_no += 1;
            if r.read_line(&mut line)? == 0 {
                return Err(Error::Parse { line: line_no, message: format!("file ends inside element `{}`", el.name) });
            }
            let mut tokens = line.split_whitespace();
            let mut num = |what: &str| -> Result<f64> {
                let t = tokens.next().ok_or(Error::Parse { line: line_no, message: format!("missing value for {what}") })?;
                t.parse::<f64>().map_err(|_| Error::Parse { line: line_no, message: format!("`{t}` is not a number") })
            };
            let mut row = Vec::with_capacity(names.len());
            for p in &el.properties {
                match p {
                    Property::Scalar { name, .. } => row.push(num(name)?),
                    Property::List { .. } => {
                        let n = num("list length")?;
                        for _ in 0..n as usize {
                            num("list item")?;
                        }
                    }
                }
            }
            if is_vertex {
                rows.push(row);
            }
        }
        if is_vertex {
            table = Some(Table { names, rows });
        }
    }
    table.ok_or(Error::Parse { line: h.lines, message: "no `vertex` element".into() })
}

pub fn read_ply(path: &Path) -> Result<Vec<GaussianPrimitive>> {
    let file = File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingInput { path: path.to_path_buf(), hint: "no such PLY file".into() }
        } else {
            Error::Io(e)
        }
    })?;
    read_ply_from(&mut BufReader::new(file))
}

pub fn read_ply_from(r: &mut impl BufRead) -> Result<Vec<GaussianPrimitive>> {
    let header = parse_header(r)?;
    let table = match header.encoding {
        Encoding::Ascii => read_ascii(r, &header)?,
        _ => read_binary(r, &header)?,
    };
    decode_table(&table)
}

fn decode_table(t: &Table) -> Result<Vec<GaussianPrimitive>> {
    let col = |name: &str| t.names.iter().position(|n| n == name);
    let need = |name: &str| col(name).ok_or(Error::Format { section: "ply header", offset: 0, message: format!("missing vertex property `{name}`") });
    let pos = [need("x")?, need("y")?, need("z")?];
    let dc: [Option<usize>; 3] = [col("f_dc_0"), col("f_dc_1"), col("f_dc_2")];
    let rest_count = (0..).take_while(|i| col(&format!("f_rest_{i}")).is_some()).count();
    if rest_count % 3 != 0 || rest_count > 3 * REST_PER_CHANNEL {
        return Err(Error::Format { section: "ply header", offset: 0, message: format!("{rest_count} f_rest properties do not form whole SH bands") });
    }
    let per_channel = rest_count / 3;
    let rest: Vec<usize> = (0..rest_count).map(|i| col(&format!("f_rest_{i}")).expect("counted above")).collect();
    let opacity = col("opacity");
    let scale: [Option<usize>; 3] = [col("scale_0"), col("scale_1"), col("scale_2")];
    let rot: [Option<usize>; 4] = [col("rot_0"), col("rot_1"), col("rot_2"), col("rot_3")];
    let ext: Vec<Option<usize>> = EXTENSION.iter().map(|n| col(n)).collect();
    let extended = ext.iter().all(Option::is_some);
    if !extended && ext.iter().any(Option::is_some) {
        return Err(Error::Format { section: "ply header", offset: 0, message: "partial transparent-attribute extension".into() });
    }
    let mut out = Vec::with_capacity(t.rows.len());
    for (i, row) in t.rows.iter().enumerate() {
        let get = |c: Option<usize>, default: f64| c.map_or(default, |c| row[c]);
        let position = Vec3::new(row[pos[0]], row[pos[1]], row[pos[2]]);
        let mut sh: ShCoeffs = [[0.0; 3]; SH_COEFFS];
        for c in 0..3 {
            sh[0][c] = get(dc[c], 0.0);
            for k in 0..per_channel {
                sh[k + 1][c] = row[rest[c * per_channel + k]];
            }
        }
        let opacity = sigmoid(get(opacity, 10.0));
        let scale = Vec3::new(get(scale[0], -5.0).exp(), get(scale[1], -5.0).exp(), get(scale[2], -5.0).exp());
        let q = [get(rot[0], 1.0), get(rot[1], 0.0), get(rot[2], 0.0), get(rot[3], 0.0)];
        let mut coords = nalgebra::Vector4::new(q[1], q[2], q[3], q[0]);
        let len = coords.norm();
        if !(len > 0.0) {
            return Err(Error::Format { section: "ply body", offset: 0, message: format!("vertex {i}: zero rotation quaternion") });
        }
        if (len - 1.0).abs() > RENORMALIZE_TOLERANCE {
            coords /= len;
        }
        let rotation = Quat::new_unchecked(nalgebra::Quaternion::from(coords));
        let mut p = GaussianPrimitive { position, scale, rotation, opacity, sh, attrs: TransparentAttributes::default() };
        if extended {
            let v: Vec<f64> = ext.iter().map(|c| row[c.expect("checked extended")]).collect();
            let mut normal = Vec3::new(v[7], v[8], v[9]);
            let n = normal.norm();
            if n > 0.0 && (n - 1.0).abs() > RENORMALIZE_TOLERANCE {
                normal /= n;
            }
            p.attrs = TransparentAttributes {
                transparency: v[0],
                ior: v[1],
                roughness: v[2],
                metallic: v[3],
                base_color: [v[4], v[5], v[6]],
                normal,
            };
        } else {
            p.attrs.normal = p.thinnest_axis();
        }
        p.validate().map_err(|e| Error::Format { section: "ply body", offset: 0, message: format!("vertex {i}: {e}") })?;
        out.push(p);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::io::Cursor;

    fn random_primitive(rng: &mut ChaCha8Rng) -> GaussianPrimitive {
        let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let rotation = Quat::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.gen_range(0.0..6.0));
        let mut sh = [[0.0; 3]; SH_COEFFS];
        for k in sh.iter_mut() {
            *k = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        }
        let normal = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.5).normalize();
        GaussianPrimitive {
            position: Vec3::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)),
            scale: Vec3::new(rng.gen_range(0.001..0.5), rng.gen_range(0.001..0.5), rng.gen_range(0.001..0.5)),
            rotation,
            opacity: rng.gen_range(0.01..0.99),
            sh,
            attrs: TransparentAttributes {
                normal,
                roughness: rng.gen(),
                metallic: rng.gen(),
                transparency: rng.gen(),
                ior: rng.gen_range(1.0..2.5),
                base_color: [rng.gen(), rng.gen(), rng.gen()],
            },
        }
    }

    fn bytes(prims: &[GaussianPrimitive]) -> Vec<u8> {
        let mut v = Vec::new();
        write_ply_to(&mut v, prims).unwrap();
        v
    }

    #[test]
    fn save_of_load_reproduces_the_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let prims: Vec<_> = (0..200).map(|_| random_primitive(&mut rng)).collect();
        let first = bytes(&prims);
        let loaded = read_ply_from(&mut Cursor::new(&first)).unwrap();
        assert_eq!(bytes(&loaded), first);
        // and loading is a fixed point from then on
        assert_eq!(read_ply_from(&mut Cursor::new(bytes(&loaded))).unwrap(), loaded);
        for (a, b) in prims.iter().zip(&loaded) {
            assert!((a.position - b.position).norm() < 1e-5);
            assert!((a.opacity - b.opacity).abs() < 1e-6);
            assert!((a.attrs.ior - b.attrs.ior).abs() < 1e-6);
        }
    }

    proptest! {
        #[test]
        fn round_trip_is_exact_after_one_save(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let prims: Vec<_> = (0..5).map(|_| random_primitive(&mut rng)).collect();
            let first = bytes(&prims);
            let loaded = read_ply_from(&mut Cursor::new(&first)).unwrap();
            prop_assert_eq!(bytes(&loaded), first);
        }
    }

    /// A degree-1 community file with normals and no extension.
    fn community_ascii() -> String {
        let mut s = String::from("ply\nformat ascii 1.0\ncomment trained elsewhere\nelement vertex 2\n");
        for p in ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"] {
            s.push_str(&format!("property float {p}\n"));
        }
        for i in 0..9 {
            s.push_str(&format!("property float f_rest_{i}\n"));
        }
        for p in ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"] {
            s.push_str(&format!("property float {p}\n"));
        }
        s.push_str("element face 1\nproperty list uchar int vertex_indices\nend_header\n");
        s.push_str("1 2 3 0 0 0 0.5 0.25 0.125 1 2 3 4 5 6 7 8 9 0 -1 -2 -3 2 0 0 0\n");
        s.push_str("0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 0 2.5 0 0 0 1 0 0 0\n");
        s.push_str("3 0 1 1\n");
        s
    }

    #[test]
    fn community_file_defaults() {
        let prims = read_ply_from(&mut Cursor::new(community_ascii().into_bytes())).unwrap();
        assert_eq!(prims.len(), 2);
        let p = &prims[0];
        assert_eq!(p.position, Vec3::new(1.0, 2.0, 3.0));
        assert_eq!(p.opacity, 0.5);
        assert!((p.scale - Vec3::new((-1f64).exp(), (-2f64).exp(), (-3f64).exp())).norm() < 1e-15);
        // quaternion (2, 0, 0, 0) is normalized to the identity
        assert_eq!(p.rotation, Quat::identity());
        assert_eq!(p.sh[0], [0.5, 0.25, 0.125]);
        // channel-major rest: red gets 1 2 3, green 4 5 6, blue 7 8 9
        assert_eq!([p.sh[1][0], p.sh[2][0], p.sh[3][0]], [1.0, 2.0, 3.0]);
        assert_eq!([p.sh[1][2], p.sh[2][2], p.sh[3][2]], [7.0, 8.0, 9.0]);
        assert_eq!(p.sh[4], [0.0; 3]);
        let a = &p.attrs;
        assert_eq!((a.transparency, a.ior, a.base_color), (0.0, 1.5, [1.0; 3]));
        // thinnest axis of scales (e^-1, e^-2, e^-3) is z
        assert_eq!(a.normal, Vec3::z());
        assert!((prims[1].opacity - sigmoid(2.5)).abs() < 1e-15);
    }

    #[test]
    fn big_endian_binary_reads() {
        let mut s = String::from("ply\nformat binary_big_endian 1.0\nelement vertex 1\n");
        for p in ["x", "y", "z"] {
            s.push_str(&format!("property double {p}\n"));
        }
        s.push_str("property uchar red\nend_header\n");
        let mut b = s.into_bytes();
        for v in [0.5f64, -1.0, 2.0] {
            b.extend(v.to_be_bytes());
        }
        b.push(200);
        let prims = read_ply_from(&mut Cursor::new(b)).unwrap();
        assert_eq!(prims[0].position, Vec3::new(0.5, -1.0, 2.0));
        // missing color and shape fall back to defaults
        assert_eq!(prims[0].sh, [[0.0; 3]; SH_COEFFS]);
    }

    #[test]
    fn errors_locate_the_problem() {
        assert!(matches!(read_ply_from(&mut Cursor::new(b"plx\n".to_vec())), Err(Error::Parse { line: 1, .. })));
        let bad_type = "ply\nformat ascii 1.0\nelement vertex 1\nproperty quad x\nend_header\n";
        assert!(matches!(read_ply_from(&mut Cursor::new(bad_type.as_bytes().to_vec())), Err(Error::Parse { line: 4, .. })));
        let bad_value = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n1 two 3\n";
        assert!(matches!(read_ply_from(&mut Cursor::new(bad_value.as_bytes().to_vec())), Err(Error::Parse { line: 8, .. })));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = bytes(&[random_primitive(&mut rng), random_primitive(&mut rng)]);
        let header_len = b.len() - 2 * property_names().len() * 4;
        b.truncate(b.len() - 3);
        match read_ply_from(&mut Cursor::new(b)) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset as usize, header_len + (2 * property_names().len() - 1) * 4),
            other => panic!("{other:?}"),
        }
        let tmp = tempfile::tempdir().unwrap();
        assert!(matches!(read_ply(&tmp.path().join("none.ply")), Err(Error::MissingInput { .. })));
    }

    #[test]
    fn empty_scene_round_trips() {
        let b = bytes(&[]);
        assert!(read_ply_from(&mut Cursor::new(&b)).unwrap().is_empty());
    }

    #[test]
    fn file_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let prims: Vec<_> = (0..10).map(|_| random_primitive(&mut rng)).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.ply");
        write_ply(&path, &prims).unwrap();
        let loaded = read_ply(&path).unwrap();
        let again = dir.path().join("t.ply");
        write_ply(&again, &loaded).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
    }
}
