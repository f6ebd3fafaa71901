use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use super::{EmbeddingIndex, IndexEntry};
use crate::cae::Embedding;
use crate::error::{Error, Result};

pub const DDIX_MAGIC: &[u8; 4] = b"DDIX";

/// Layout: magic, u32 D_z, u32 entry count, then per entry a u32-length
/// prefixed UTF-8 case id, a u32 label and D_z little-endian f64 values.
pub fn save_index(index: &EmbeddingIndex, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let u32_of = |n: usize| u32::try_from(n).map_err(|_| Error::Config(format!("{n} exceeds u32")));
    let mut buf = DDIX_MAGIC.to_vec();
    buf.extend_from_slice(&u32_of(index.dim())?.to_le_bytes());
    buf.extend_from_slice(&u32_of(index.len())?.to_le_bytes());
    for e in index.entries() {
        buf.extend_from_slice(&u32_of(e.case_id.len())?.to_le_bytes());
        buf.extend_from_slice(e.case_id.as_bytes());
        buf.extend_from_slice(&u32_of(e.label)?.to_le_bytes());
        for v in e.embedding.as_slice() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn corrupt(&self, reason: &str) -> Error {
        Error::Corrupt { path: self.path.into(), reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Truncated { path: self.path.into() })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(LittleEndian::read_u32(self.take(4)?) as usize)
    }
}

pub fn load_index(path: impl AsRef<Path>) -> Result<EmbeddingIndex> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != DDIX_MAGIC {
        return Err(Error::BadMagic { path: path.into(), expected: "DDIX" });
    }
    let mut r = Reader { bytes: &bytes, at: 4, path };
    let dim = r.u32()?;
    let count = r.u32()?;
    let mut entries = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let len = r.u32()?;
        let case_id = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| r.corrupt("case id is not UTF-8"))?;
        let label = r.u32()?;
        let raw = r.take(dim.checked_mul(8).ok_or_else(|| r.corrupt("dimension overflows"))?)?;
        let mut z = vec![0f64; dim];
        LittleEndian::read_f64_into(raw, &mut z);
        entries.push(IndexEntry { case_id, label, embedding: Embedding(z) });
    }
    if r.at != bytes.len() {
        return Err(r.corrupt("trailing bytes"));
    }
    EmbeddingIndex::new(dim, entries).map_err(|e| r.corrupt(&e.to_string()))
}
