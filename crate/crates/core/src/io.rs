//! Little-endian binary helpers, content hashing and file access shared by
//! the artifact formats.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes through a sibling temp file and renames, so readers never see a
/// half-written artifact.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Default)]
pub struct ByteWriter {
    pub buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(b);
        self
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn i64(&mut self, v: i64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    /// Length-prefixed (u32) UTF-8 block.
    pub fn text(&mut self, s: &str) -> &mut Self {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes())
    }
}

/// Cursor over a byte slice whose errors name the field being decoded.
pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        ByteReader { data, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                field,
                format!(
                    "truncated: need {n} bytes at offset {}, have {}",
                    self.pos,
                    self.remaining()
                ),
            ));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self, field: &str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    pub fn u32(&mut self, field: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    pub fn u64(&mut self, field: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub fn i64(&mut self, field: &str) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub fn f64(&mut self, field: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    pub fn text(&mut self, field: &str) -> Result<&'a str> {
        let n = self.u32(field)? as usize;
        let raw = self.take(n, field)?;
        std::str::from_utf8(raw).map_err(|e| Error::format(field, e.to_string()))
    }

    /// Count field that must be satisfiable by the bytes left, each element
    /// taking at least `elem_size` bytes.
    pub fn count(&mut self, field: &str, elem_size: usize) -> Result<usize> {
        let n = self.u32(field)? as usize;
        if n.saturating_mul(elem_size) > self.remaining() {
            return Err(Error::format(
                field,
                format!("count {n} exceeds remaining data"),
            ));
        }
        Ok(n)
    }
}

/// Checks a 16-byte `magic ‖ u32 version ‖ u32 reserved` header.
pub fn check_header(r: &mut ByteReader<'_>, magic: &[u8; 8], version: u32) -> Result<()> {
    let m = r.take(8, "magic")?;
    if m != magic {
        return Err(Error::format(
            "magic",
            format!("expected {:?}", String::from_utf8_lossy(magic)),
        ));
    }
    let v = r.u32("version")?;
    if v != version {
        return Err(Error::format(
            "version",
            format!("unsupported version {v}, expected {version}"),
        ));
    }
    r.u32("reserved")?;
    Ok(())
}

pub fn write_header(w: &mut ByteWriter, magic: &[u8; 8], version: u32) {
    w.bytes(magic).u32(version).u32(0);
}

/// Appends a SHA-256 of everything written so far.
pub fn seal(mut w: ByteWriter) -> Vec<u8> {
    let digest = sha256(&w.buf);
    w.bytes(&digest);
    w.buf
}

/// Splits off and verifies the trailing SHA-256 written by [`seal`].
pub fn unseal(data: &[u8]) -> Result<&[u8]> {
    if data.len() < 32 + 16 {
        return Err(Error::format("header", "file too short"));
    }
    let (body, digest) = data.split_at(data.len() - 32);
    if sha256(body) != digest {
        return Err(Error::format(
            "content_hash",
            "SHA-256 mismatch (corrupt or truncated file)",
        ));
    }
    Ok(body)
}
