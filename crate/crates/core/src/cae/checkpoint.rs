//! `DDCK` checkpoints: magic, version, network spec, then named f64 tensors,
//! all little-endian.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use super::{Bypass, Model, NetworkSpec};
use crate::error::{Error, Result};
use crate::ndgrad::{ParamStore, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DDCK";
const VERSION: u32 = 1;

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let spec = model.spec();
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    let put = |v: usize, buf: &mut Vec<u8>| buf.extend_from_slice(&(v as u32).to_le_bytes());
    put(VERSION as usize, &mut buf);
    for &d in &spec.input_dims {
        put(d, &mut buf);
    }
    for &c in &spec.block_channels {
        put(c, &mut buf);
    }
    for &c in &spec.convs_per_block {
        put(c, &mut buf);
    }
    put(spec.kernel, &mut buf);
    put(spec.bottleneck_channels, &mut buf);
    put(spec.bypasses.len(), &mut buf);
    for bp in &spec.bypasses {
        put(bp.from_block, &mut buf);
        put(bp.to_block, &mut buf);
        put(bp.to_conv, &mut buf);
    }
    put(model.params().len(), &mut buf);
    for (name, p) in model.params().iter() {
        put(name.len(), &mut buf);
        buf.extend_from_slice(name.as_bytes());
        put(p.value.shape().len(), &mut buf);
        for &d in p.value.shape() {
            put(d, &mut buf);
        }
        for &v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Reader<'_> {
    fn corrupt(&self, reason: &str) -> Error {
        Error::Corrupt { path: self.path.into(), reason: reason.into() }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| self.corrupt("unexpected end of file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(LittleEndian::read_u32(self.take(4)?) as usize)
    }
}

/// Loads a checkpoint. When `expected` is given, the stored spec must equal it.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: Option<&NetworkSpec>) -> Result<Model> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = Reader { bytes: &bytes, pos: 0, path };
    if r.take(4).ok() != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(Error::BadMagic { path: path.into(), expected: "DDCK" });
    }
    if r.u32()? != VERSION as usize {
        return Err(r.corrupt("unsupported version"));
    }
    let mut arr3 = [0; 3];
    for d in &mut arr3 {
        *d = r.u32()?;
    }
    let mut channels = [0; 4];
    for c in &mut channels {
        *c = r.u32()?;
    }
    let mut convs = [0; 4];
    for c in &mut convs {
        *c = r.u32()?;
    }
    let kernel = r.u32()?;
    let bottleneck_channels = r.u32()?;
    let n_bypass = r.u32()?;
    if n_bypass > 16 {
        return Err(r.corrupt("implausible bypass count"));
    }
    let mut bypasses = Vec::with_capacity(n_bypass);
    for _ in 0..n_bypass {
        bypasses.push(Bypass { from_block: r.u32()?, to_block: r.u32()?, to_conv: r.u32()? });
    }
    let spec = NetworkSpec {
        input_dims: arr3,
        block_channels: channels,
        convs_per_block: convs,
        kernel,
        bottleneck_channels,
        bypasses,
    };
    spec.validate().map_err(|e| r.corrupt(&e.to_string()))?;
    if let Some(exp) = expected {
        if *exp != spec {
            return Err(Error::SpecMismatch(format!("file holds {spec:?}, expected {exp:?}")));
        }
    }

    let n_params = r.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..n_params {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| r.corrupt("parameter name is not UTF-8"))?;
        let ndim = r.u32()?;
        if ndim == 0 || ndim > 8 {
            return Err(r.corrupt("implausible tensor rank"));
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()?);
        }
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| r.corrupt("tensor size overflows"))?;
        let raw = r.take(n.checked_mul(8).ok_or_else(|| r.corrupt("tensor size overflows"))?)?;
        let mut data = vec![0f64; n];
        LittleEndian::read_f64_into(raw, &mut data);
        let t = Tensor::new(shape, data).map_err(|e| r.corrupt(&e.to_string()))?;
        params.insert(name, t).map_err(|e| r.corrupt(&e.to_string()))?;
    }
    if r.pos != bytes.len() {
        return Err(r.corrupt("trailing bytes"));
    }
    Model::from_parts(spec, params).map_err(|e| match e {
        Error::SpecMismatch(m) => r.corrupt(&m),
        other => other,
    })
}
