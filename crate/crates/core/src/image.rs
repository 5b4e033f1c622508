//! RGB float rasters, bilinear lookup, and PPM/PFM I/O.

use std::fs;
use std::io::{BufRead, Cursor, Read};
use std::path::Path;

use crate::error::{Error, Result};

pub type Rgb = [f32; 3];

/// Row-major RGB raster with values nominally in `[0, 1]`. Pixel `(x, y)` has
/// its center at continuous coordinate `(x, y)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<Rgb>,
}

impl Raster {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, value: Rgb) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[Rgb] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [Rgb] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: Rgb) {
        self.data[y * self.width + x] = value;
    }

    /// Whether a continuous position lies within the pixel footprint.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= -0.5 && y >= -0.5 && x <= self.width as f64 - 0.5 && y <= self.height as f64 - 0.5
    }

    /// Bilinear lookup with clamp-to-edge addressing.
    pub fn bilinear(&self, x: f64, y: f64) -> [f64; 3] {
        let max_x = self.width as f64 - 1.0;
        let max_y = self.height as f64 - 1.0;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [0.0; 3];
        for ch in 0..3 {
            let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
            let bottom = c[ch] as f64 * (1.0 - fx) + d[ch] as f64 * fx;
            out[ch] = top * (1.0 - fy) + bottom * fy;
        }
        out
    }

    /// Copies a `w x h` window starting at `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Raster {
        Raster::from_fn(w, h, |i, j| self.get(x + i, y + j))
    }

    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for px in &self.data {
            for &v in px {
                out.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        out
    }

    pub fn decode_ppm(bytes: &[u8]) -> Result<Raster> {
        let mut cursor = Cursor::new(bytes);
        let magic = read_token(&mut cursor)?;
        if magic != "P6" {
            return Err(Error::format("expected PPM magic P6", 0));
        }
        let width = parse_header_number(&mut cursor)?;
        let height = parse_header_number(&mut cursor)?;
        let maxval = parse_header_number(&mut cursor)?;
        if maxval != 255 {
            return Err(Error::format(format!("unsupported PPM maxval {maxval}"), cursor.position()));
        }
        let start = cursor.position() as usize;
        let need = width * height * 3;
        if bytes.len() < start + need {
            return Err(Error::format("truncated PPM pixel data", bytes.len() as u64));
        }
        let body = &bytes[start..start + need];
        let data = body
            .chunks_exact(3)
            .map(|c| [c[0] as f32 / 255.0, c[1] as f32 / 255.0, c[2] as f32 / 255.0])
            .collect();
        Ok(Raster {
            width,
            height,
            data,
        })
    }

    /// Color PFM, little-endian, rows stored bottom to top.
    pub fn encode_pfm(&self) -> Vec<u8> {
        let mut out = format!("PF\n{} {}\n-1.0\n", self.width, self.height).into_bytes();
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                for v in self.get(x, y) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn decode_pfm(bytes: &[u8]) -> Result<Raster> {
        let mut cursor = Cursor::new(bytes);
        let magic = read_token(&mut cursor)?;
        if magic != "PF" {
            return Err(Error::format("expected color PFM magic PF", 0));
        }
        let width = parse_header_number(&mut cursor)?;
        let height = parse_header_number(&mut cursor)?;
        let scale_pos = cursor.position();
        let scale: f64 = read_token(&mut cursor)?
            .parse()
            .map_err(|_| Error::format("bad PFM scale", scale_pos))?;
        let little = scale < 0.0;
        let start = cursor.position() as usize;
        let need = width * height * 12;
        if bytes.len() < start + need {
            return Err(Error::format("truncated PFM pixel data", bytes.len() as u64));
        }
        let mut raster = Raster::new(width, height);
        let mut words = bytes[start..start + need].chunks_exact(4).map(|w| {
            let w = [w[0], w[1], w[2], w[3]];
            if little {
                f32::from_le_bytes(w)
            } else {
                f32::from_be_bytes(w)
            }
        });
        for y in (0..height).rev() {
            for x in 0..width {
                let px = [words.next().unwrap(), words.next().unwrap(), words.next().unwrap()];
                raster.set(x, y, px);
            }
        }
        Ok(raster)
    }

    /// Loads `.ppm` or `.pfm` by extension.
    pub fn load(path: &Path) -> Result<Raster> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let decoded = match path.extension().and_then(|e| e.to_str()) {
            Some("pfm") => Raster::decode_pfm(&bytes),
            _ => Raster::decode_ppm(&bytes),
        };
        decoded.map_err(|e| match e {
            Error::Format { what, offset } => Error::Format {
                what: format!("{}: {what}", path.display()),
                offset,
            },
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some("pfm") => self.encode_pfm(),
            _ => self.encode_ppm(),
        };
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

fn read_token(cursor: &mut Cursor<&[u8]>) -> Result<String> {
    let mut token = Vec::new();
    loop {
        let mut byte = [0u8];
        if cursor.read(&mut byte).map_err(|e| Error::io("<memory>", e))? == 0 {
            break;
        }
        match byte[0] {
            b'#' if token.is_empty() => {
                let mut skip = Vec::new();
                cursor
                    .read_until(b'\n', &mut skip)
                    .map_err(|e| Error::io("<memory>", e))?;
            }
            b if b.is_ascii_whitespace() => {
                if !token.is_empty() {
                    break;
                }
            }
            b => token.push(b),
        }
    }
    if token.is_empty() {
        return Err(Error::format("unexpected end of header", cursor.position()));
    }
    String::from_utf8(token).map_err(|_| Error::format("non-ASCII header", cursor.position()))
}

fn parse_header_number(cursor: &mut Cursor<&[u8]>) -> Result<usize> {
    let pos = cursor.position();
    read_token(cursor)?
        .parse()
        .map_err(|_| Error::format("expected a number in header", pos))
}

/// Binary per-pixel mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                mask.data[y * width + x] = f(x, y);
            }
        }
        mask
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Raster {
        Raster::from_fn(5, 3, |x, y| [x as f32 / 4.0, y as f32 / 2.0, 0.5])
    }

    #[test]
    fn ppm_round_trip_is_byte_identical() {
        let bytes = sample().encode_ppm();
        let back = Raster::decode_ppm(&bytes).unwrap();
        assert_eq!(back.encode_ppm(), bytes);
    }

    #[test]
    fn pfm_round_trip_is_exact() {
        let r = sample();
        assert_eq!(Raster::decode_pfm(&r.encode_pfm()).unwrap(), r);
    }

    #[test]
    fn bilinear_interpolates_linear_ramp() {
        let r = sample();
        let v = r.bilinear(1.25, 0.5);
        assert!((v[0] - 1.25 / 4.0).abs() < 1e-6);
        assert!((v[1] - 0.25).abs() < 1e-6);
    }

    #[test]
    fn truncated_ppm_reports_offset() {
        let mut bytes = sample().encode_ppm();
        bytes.truncate(20);
        assert!(matches!(Raster::decode_ppm(&bytes), Err(Error::Format { .. })));
    }
}
