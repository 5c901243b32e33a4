//! Versioned, length-prefixed binary container shared by all model files.
//!
//! All integers and floats are little-endian.
//!
//! | offset | size | field                                          |
//! |--------|------|------------------------------------------------|
//! | 0      | 4    | magic `CDNA`                                   |
//! | 4      | 2    | container format version (currently 1)        |
//! | 6      | 1    | section type: 1 forest, 2 quantized forest, 3 autoencoder |
//! | 7      | 2    | feature schema version                          |
//! | 9      | 4    | payload length `n`                              |
//! | 13     | n    | payload (layout per section type)               |
//!
//! The file ends exactly after the payload. Payload layouts are documented
//! next to their encoders.

use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CDNA";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 13;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Section {
    Forest = 1,
    QuantizedForest = 2,
    Autoencoder = 3,
}

impl Section {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            1 => Ok(Section::Forest),
            2 => Ok(Section::QuantizedForest),
            3 => Ok(Section::Autoencoder),
            other => Err(Error::CorruptModel(format!("unknown section type {other}"))),
        }
    }
}

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64s(&mut self, vs: &[f64]) {
        for &v in vs {
            self.f64(v);
        }
    }
    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::CorruptModel(format!("unexpected end of data at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }
    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    pub fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    /// Length prefix that must be satisfiable by the bytes that remain,
    /// given at least `min_item` bytes per item.
    pub fn count(&mut self, min_item: usize) -> Result<usize> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item) > self.buf.len() - self.pos {
            return Err(Error::CorruptModel(format!("count {n} exceeds remaining data")));
        }
        Ok(n)
    }

    pub fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::CorruptModel(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn encode(section: Section, schema_version: u16, payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(section as u8);
    out.extend_from_slice(&schema_version.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(payload);
    out
}

pub struct Envelope<'a> {
    pub section: Section,
    pub schema_version: u16,
    pub payload: &'a [u8],
}

pub fn open(bytes: &[u8]) -> Result<Envelope<'_>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::CorruptModel("file shorter than header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::CorruptModel("bad magic".into()));
    }
    let mut r = Reader::new(&bytes[4..HEADER_LEN]);
    let version = r.u16()?;
    let section = r.u8()?;
    let schema_version = r.u16()?;
    let len = r.u32()? as usize;
    if bytes.len() != HEADER_LEN + len {
        return Err(Error::CorruptModel(format!(
            "payload length {} does not match header ({len})",
            bytes.len() - HEADER_LEN
        )));
    }
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            what: "container format",
            expected: FORMAT_VERSION.into(),
            found: version.into(),
        });
    }
    Ok(Envelope {
        section: Section::from_byte(section)?,
        schema_version,
        payload: &bytes[HEADER_LEN..],
    })
}

/// Opens a container and checks its section type and schema version.
pub fn open_expecting(bytes: &[u8], section: Section, schema_version: u16) -> Result<&[u8]> {
    let env = open(bytes)?;
    if env.section != section {
        return Err(Error::CorruptModel(format!(
            "expected {section:?} section, found {:?}",
            env.section
        )));
    }
    if env.schema_version != schema_version {
        return Err(Error::VersionMismatch {
            what: "feature schema",
            expected: schema_version.into(),
            found: env.schema_version.into(),
        });
    }
    Ok(env.payload)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
