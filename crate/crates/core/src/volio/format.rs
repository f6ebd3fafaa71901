use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use super::Volume;
use crate::error::{Error, Result};

pub const VOL1_MAGIC: &[u8; 4] = b"VOL1";
/// Magic plus three u32 dims.
pub const VOL1_HEADER_LEN: usize = 16;

pub fn write_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(VOL1_HEADER_LEN + 4 * v.len());
    buf.extend_from_slice(VOL1_MAGIC);
    for d in v.dims() {
        let d = u32::try_from(d).map_err(|_| Error::InvalidDims(format!("{d} exceeds u32")))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for &x in v.voxels() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 || &bytes[..4] != VOL1_MAGIC {
        return Err(Error::BadMagic { path: path.into(), expected: "VOL1" });
    }
    if bytes.len() < VOL1_HEADER_LEN {
        return Err(Error::Truncated { path: path.into() });
    }
    let dims = [
        LittleEndian::read_u32(&bytes[4..8]) as usize,
        LittleEndian::read_u32(&bytes[8..12]) as usize,
        LittleEndian::read_u32(&bytes[12..16]) as usize,
    ];
    let payload = &bytes[VOL1_HEADER_LEN..];
    if payload.len() % 4 != 0 {
        return Err(Error::Truncated { path: path.into() });
    }
    let declared = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let found = payload.len() / 4;
    match declared {
        Some(n) if n == found => {}
        Some(n) => return Err(Error::PayloadMismatch { declared: n, found }),
        None => return Err(Error::InvalidDims(format!("{dims:?} overflows"))),
    }
    let mut voxels = vec![0f32; found];
    LittleEndian::read_f32_into(payload, &mut voxels);
    Volume::new(dims, voxels)
}
