//! 8-bit RGB images and binary PPM (P6) I/O.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

pub fn to_u8(x: f64) -> u8 {
    (x.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; 3 * width * height],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut im = Self::new(width, height);
        for px in im.data.chunks_mut(3) {
            px.copy_from_slice(&rgb);
        }
        im
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::param(format!("{} bytes for a {width}x{height} RGB image", data.len())));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn raw(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn set_f64(&mut self, x: usize, y: usize, rgb: [f64; 3]) {
        self.set(x, y, rgb.map(to_u8));
    }

    /// Bilinear lookup at continuous pixel coordinates, where pixel `(i, j)`
    /// has its center at `(i + 0.5, j + 0.5)`. Clamp-to-edge outside.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> [f64; 3] {
        let (w, h) = (self.width as isize, self.height as isize);
        let u = x - 0.5;
        let v = y - 0.5;
        let (x0, y0) = (u.floor(), v.floor());
        let (fx, fy) = (u - x0, v - y0);
        let (x0, y0) = (x0 as isize, y0 as isize);
        let px = |i: isize, j: isize| self.get(i.clamp(0, w - 1) as usize, j.clamp(0, h - 1) as usize);
        let (a, b, c, d) = (px(x0, y0), px(x0 + 1, y0), px(x0, y0 + 1), px(x0 + 1, y0 + 1));
        let mut out = [0.0; 3];
        for k in 0..3 {
            let top = a[k] as f64 * (1.0 - fx) + b[k] as f64 * fx;
            let bottom = c[k] as f64 * (1.0 - fx) + d[k] as f64 * fx;
            out[k] = (top * (1.0 - fy) + bottom * fy) / 255.0;
        }
        out
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_ppm(bytes: &[u8], file: &str) -> Result<Self> {
        let err = |m: &str| Error::Parse {
            file: file.to_string(),
            line: 1,
            message: m.to_string(),
        };
        // Header: magic, width, height, maxval, separated by whitespace with
        // optional comments, then a single whitespace byte.
        let mut pos = 0;
        let mut fields = Vec::new();
        while fields.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(err("truncated header"));
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| err("non-ascii header"))?);
        }
        if fields[0] != "P6" {
            return Err(err("not a binary PPM (P6)"));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| err("bad header number"));
        let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
        if maxval != 255 {
            return Err(err("only 8-bit PPM is supported"));
        }
        pos += 1;
        let need = 3 * w * h;
        if bytes.len() < pos + need {
            return Err(err("truncated pixel data"));
        }
        Self::from_raw(w, h, bytes[pos..pos + need].to_vec())
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic(path, &self.to_ppm(), "image")
    }

    pub fn load_ppm(path: &Path) -> Result<Self> {
        let bytes = fsutil::read_bytes(path, "image")?;
        Self::from_ppm(&bytes, &path.display().to_string())
    }
}

/// Blue → cyan → green → yellow → red for `t` in `[0, 1]`.
pub fn heat_color(t: f64) -> [f64; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let s = 4.0 * t;
    match s {
        s if s < 1.0 => [0.0, s, 1.0],
        s if s < 2.0 => [0.0, 1.0, 2.0 - s],
        s if s < 3.0 => [s - 2.0, 1.0, 0.0],
        s => [1.0, 4.0 - s, 0.0],
    }
}
