//! Linear float image buffers plus PNG (8-bit sRGB) and PFM (32-bit linear) output.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major linear RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f32; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, value: [f32; 3]) -> Self {
        RgbImage {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        RgbImage { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: [f32; 3]) {
        self.data[y * self.width + x] = v;
    }

    pub fn same_shape(&self, other: &RgbImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// One channel as a scalar image.
    pub fn channel(&self, c: usize) -> ScalarImage {
        ScalarImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|p| p[c]).collect(),
        }
    }

    pub fn write_png(&self, path: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len() * 3);
        for p in &self.data {
            for &c in p {
                bytes.push(encode_srgb(c));
            }
        }
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, image::ColorType::Rgb8)
            .map_err(|e| Error::Image(e.to_string()))
    }

    /// Little-endian color PFM; rows are stored bottom-to-top as the format requires.
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(w, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                for c in self.get(x, y) {
                    w.write_all(&c.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_pfm(path: &Path) -> Result<RgbImage> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let mut header = Vec::new();
        for _ in 0..3 {
            let mut line = String::new();
            r.read_line(&mut line)?;
            header.push(line.trim().to_string());
        }
        let bad = |m: &str| Error::Parse { line: 1, message: m.to_string() };
        if header[0] != "PF" {
            return Err(bad("expected color PFM"));
        }
        let dims: Vec<usize> = header[1].split_whitespace().filter_map(|s| s.parse().ok()).collect();
        if dims.len() != 2 {
            return Err(bad("bad dimensions line"));
        }
        let scale: f32 = header[2].parse().map_err(|_| bad("bad scale line"))?;
        let little = scale < 0.0;
        let (w, h) = (dims[0], dims[1]);
        let mut img = RgbImage::new(w, h);
        let mut buf = [0u8; 4];
        for y in (0..h).rev() {
            for x in 0..w {
                let mut px = [0.0f32; 3];
                for c in px.iter_mut() {
                    r.read_exact(&mut buf)?;
                    *c = if little { f32::from_le_bytes(buf) } else { f32::from_be_bytes(buf) };
                }
                img.set(x, y, px);
            }
        }
        Ok(img)
    }
}

/// Row-major single-channel float image.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl ScalarImage {
    pub fn new(width: usize, height: usize) -> Self {
        ScalarImage {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn to_rgb(&self) -> RgbImage {
        RgbImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| [v; 3]).collect(),
        }
    }
}

pub fn encode_srgb(linear: f32) -> u8 {
    let c = linear.clamp(0.0, 1.0);
    let s = if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    };
    (s * 255.0 + 0.5).floor() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip() {
        let img = RgbImage::from_fn(5, 3, |x, y| [x as f32, y as f32 * 0.5, -1.25]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pfm");
        img.write_pfm(&p).unwrap();
        assert_eq!(RgbImage::read_pfm(&p).unwrap(), img);
    }

    #[test]
    fn srgb_endpoints() {
        assert_eq!(encode_srgb(0.0), 0);
        assert_eq!(encode_srgb(1.0), 255);
        assert_eq!(encode_srgb(2.0), 255);
        assert_eq!(encode_srgb(0.5), 188);
    }

    #[test]
    fn png_writes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        RgbImage::filled(4, 4, [0.5, 0.2, 0.9]).write_png(&p).unwrap();
        assert!(p.metadata().unwrap().len() > 0);
    }
}
