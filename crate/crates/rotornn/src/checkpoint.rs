//! Binary checkpoint format for trained networks.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "RBNCKPT\0"
//! version  u32       currently 1
//! count    u32       number of sections
//! section  repeated:
//!     name_len  u32        at most 256
//!     name      UTF-8 bytes
//!     len       u64        number of f64 values
//!     data      len * 8 bytes of f64
//! ```
//!
//! The decoder is written for untrusted input: every read is bounds
//! checked, allocation sizes are validated against the remaining input
//! before any allocation happens, and malformed files produce a
//! [`CheckpointError`] rather than a panic.

use std::collections::HashSet;
use std::path::Path;

pub const MAGIC: [u8; 8] = *b"RBNCKPT\0";
pub const VERSION: u32 = 1;
const MAX_NAME_LEN: u32 = 256;
const MAX_SECTIONS: u32 = 4096;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("file does not start with the checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("input ends early while reading {0}")]
    Truncated(&'static str),
    #[error("section count {0} exceeds the limit")]
    TooManySections(u32),
    #[error("section name length {0} exceeds the limit")]
    NameTooLong(u32),
    #[error("section name is not valid UTF-8")]
    InvalidName,
    #[error("section '{0}' appears twice")]
    DuplicateSection(String),
    #[error("section '{name}' claims {claimed} values but only {available} bytes remain")]
    LengthOverrun {
        name: String,
        claimed: u64,
        available: usize,
    },
    #[error("{0} trailing bytes after the last section")]
    TrailingBytes(usize),
    #[error("missing section '{0}'")]
    MissingSection(String),
    #[error("section '{name}' has {got} values, expected {expected}")]
    ShapeMismatch {
        name: String,
        expected: usize,
        got: usize,
    },
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

/// An ordered list of named f64 tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    sections: Vec<(String, Vec<f64>)>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("length checked")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("length checked")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, data: Vec<f64>) {
        let name = name.into();
        assert!(name.len() <= MAX_NAME_LEN as usize, "section name too long");
        assert!(
            self.sections.iter().all(|(n, _)| *n != name),
            "duplicate section {name}"
        );
        self.sections.push((name, data));
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.sections
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| d.as_slice())
    }

    /// Fetch a section and insist on its length.
    pub fn require(&self, name: &str, expected: usize) -> Result<&[f64], CheckpointError> {
        let data = self
            .get(name)
            .ok_or_else(|| CheckpointError::MissingSection(name.to_string()))?;
        if data.len() != expected {
            return Err(CheckpointError::ShapeMismatch {
                name: name.to_string(),
                expected,
                got: data.len(),
            });
        }
        Ok(data)
    }

    pub fn section_names(&self) -> impl Iterator<Item = &str> {
        self.sections.iter().map(|(n, _)| n.as_str())
    }

    pub fn encode(&self) -> Vec<u8> {
        let payload: usize = self
            .sections
            .iter()
            .map(|(n, d)| 4 + n.len() + 8 + 8 * d.len())
            .sum();
        let mut out = Vec::with_capacity(16 + payload);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.sections.len() as u32).to_le_bytes());
        for (name, data) in &self.sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(data.len() as u64).to_le_bytes());
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let count = r.u32("section count")?;
        if count > MAX_SECTIONS {
            return Err(CheckpointError::TooManySections(count));
        }
        let mut sections = Vec::new();
        let mut seen = HashSet::new();
        for _ in 0..count {
            let name_len = r.u32("name length")?;
            if name_len > MAX_NAME_LEN {
                return Err(CheckpointError::NameTooLong(name_len));
            }
            let name_bytes = r.take(name_len as usize, "section name")?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|_| CheckpointError::InvalidName)?
                .to_string();
            if !seen.insert(name.clone()) {
                return Err(CheckpointError::DuplicateSection(name));
            }
            let len = r.u64("section length")?;
            let byte_len = len.checked_mul(8).ok_or(CheckpointError::LengthOverrun {
                name: name.clone(),
                claimed: len,
                available: r.remaining(),
            })?;
            if byte_len > r.remaining() as u64 {
                return Err(CheckpointError::LengthOverrun {
                    name,
                    claimed: len,
                    available: r.remaining(),
                });
            }
            let raw = r.take(byte_len as usize, "section data")?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("chunk size is 8")))
                .collect();
            sections.push((name, data));
        }
        if r.remaining() != 0 {
            return Err(CheckpointError::TrailingBytes(r.remaining()));
        }
        Ok(Self { sections })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        std::fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path)?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new();
        c.push("pi.w0", vec![1.0, -2.5, 3.25]);
        c.push("pi.b0", vec![0.0]);
        c.push("empty", vec![]);
        c
    }

    #[test]
    fn roundtrip_is_exact() {
        let c = sample();
        let bytes = c.encode();
        let d = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(c, d);
        assert_eq!(d.get("pi.w0").unwrap(), &[1.0, -2.5, 3.25]);
        assert_eq!(d.get("empty").unwrap(), &[] as &[f64]);
        assert!(d.get("absent").is_none());
    }

    #[test]
    fn every_truncation_errors_without_panicking() {
        let bytes = sample().encode();
        for cut in 0..bytes.len() {
            assert!(
                Checkpoint::decode(&bytes[..cut]).is_err(),
                "prefix of length {cut} decoded successfully"
            );
        }
    }

    #[test]
    fn corrupt_headers_are_rejected() {
        let mut bad_magic = sample().encode();
        bad_magic[0] ^= 0xff;
        assert!(matches!(
            Checkpoint::decode(&bad_magic),
            Err(CheckpointError::BadMagic)
        ));

        let mut bad_version = sample().encode();
        bad_version[8] = 99;
        assert!(matches!(
            Checkpoint::decode(&bad_version),
            Err(CheckpointError::UnsupportedVersion(99))
        ));

        let mut huge_len = sample().encode();
        // Overwrite the first section's value count with u64::MAX.
        let off = 16 + 4 + "pi.w0".len();
        huge_len[off..off + 8].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(matches!(
            Checkpoint::decode(&huge_len),
            Err(CheckpointError::LengthOverrun { .. })
        ));

        let mut trailing = sample().encode();
        trailing.push(0);
        assert!(matches!(
            Checkpoint::decode(&trailing),
            Err(CheckpointError::TrailingBytes(1))
        ));
    }

    #[test]
    fn duplicate_sections_are_rejected_on_decode() {
        let mut c = Checkpoint::new();
        c.push("a", vec![1.0]);
        let mut bytes = c.encode();
        // Duplicate the single section by hand and bump the count.
        let section = bytes[16..].to_vec();
        bytes.extend_from_slice(&section);
        bytes[12..16].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            Checkpoint::decode(&bytes),
            Err(CheckpointError::DuplicateSection(n)) if n == "a"
        ));
    }

    #[test]
    fn require_checks_shape() {
        let c = sample();
        assert!(c.require("pi.w0", 3).is_ok());
        assert!(matches!(
            c.require("pi.w0", 4),
            Err(CheckpointError::ShapeMismatch { expected: 4, got: 3, .. })
        ));
        assert!(matches!(
            c.require("nope", 1),
            Err(CheckpointError::MissingSection(_))
        ));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let c = sample();
        c.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), c);
    }
}
