//! Little-endian helpers shared by the binary file formats.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Cursor over a byte buffer that reports failures with their byte offset.
pub struct Reader<'a> {
    bytes: &'a [u8],
    offset: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], format: &'static str) -> Self {
        Self {
            bytes,
            offset: 0,
            format,
        }
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    pub fn error(&self, what: impl std::fmt::Display) -> Error {
        Error::format(format!("{}: {what}", self.format), self.offset as u64)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.offset < n {
            return Err(self.error(format_args!("truncated while reading {what}")));
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    pub fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let start = self.offset;
        let got = self.take(4, "magic")?;
        if got != magic {
            self.offset = start;
            return Err(self.error(format_args!("bad magic, expected {:?}", std::str::from_utf8(magic).unwrap_or("?"))));
        }
        Ok(())
    }

    /// Reads the version word and rejects anything but `expected`.
    pub fn version(&mut self, expected: u32) -> Result<()> {
        let start = self.offset;
        let v = self.u32("version")?;
        if v != expected {
            self.offset = start;
            return Err(self.error(format_args!("unsupported version {v}")));
        }
        Ok(())
    }

    pub fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    /// `count` f32 values widened to f64; rejects non-finite values.
    pub fn f32_array(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let len = count
            .checked_mul(4)
            .ok_or_else(|| self.error(format_args!("{what} length overflows")))?;
        let start = self.offset;
        let raw = self.take(len, what)?;
        let mut out = Vec::with_capacity(count);
        for (k, chunk) in raw.chunks_exact(4).enumerate() {
            let v = f32::from_le_bytes(chunk.try_into().unwrap());
            if !v.is_finite() {
                return Err(Error::format(
                    format!("{}: non-finite value in {what}", self.format),
                    (start + 4 * k) as u64,
                ));
            }
            out.push(v as f64);
        }
        Ok(out)
    }

    /// u32 length prefix followed by UTF-8 bytes.
    pub fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let start = self.offset;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec()).map_err(|_| Error::format(format!("{}: {what} is not UTF-8", self.format), start as u64))
    }

    pub fn finish(&self) -> Result<()> {
        if self.offset != self.bytes.len() {
            return Err(self.error("trailing bytes"));
        }
        Ok(())
    }
}

#[derive(Default)]
pub struct Writer {
    bytes: Vec<u8>,
}

impl Writer {
    pub fn new(magic: &[u8; 4], version: u32) -> Self {
        let mut w = Self::default();
        w.bytes.extend_from_slice(magic);
        w.u32(version);
        w
    }

    pub fn u16(&mut self, v: u16) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.bytes.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32_array(&mut self, values: &[f64]) {
        for &v in values {
            self.f32(v as f32);
        }
    }

    pub fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes.extend_from_slice(s.as_bytes());
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    write_file(path, text.as_bytes())
}
