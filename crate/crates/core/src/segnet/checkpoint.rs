//! Binary checkpoint format.
//!
//! ```text
//! magic            8 bytes  "VRSEGNET"
//! version          u32      1
//! depth            u32
//! base_channels    u32
//! in_channels      u32
//! kernel           u32      3
//! tensor count     u32
//! per tensor:
//!   name length    u32, then UTF-8 name
//!   rank           u32, then one u32 per dimension
//!   values         f32 each, count = product of dimensions
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::params::{NetworkSpec, ParamSet, Tensor, KERNEL};
use super::ops::Real;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"VRSEGNET";
const VERSION: u32 = 1;

pub fn encode_checkpoint<T: Real>(spec: &NetworkSpec, params: &ParamSet<T>) -> Result<Vec<u8>> {
    params.check_compatible(&ParamSet::<T>::zeros(spec))?;
    let mut out = Vec::with_capacity(64 + 4 * params.len());
    out.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        spec.depth as u32,
        spec.base_channels as u32,
        spec.in_channels as u32,
        KERNEL as u32,
        params.tensors().len() as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for t in params.tensors() {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &t.data {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(format!("truncated at byte {}", self.pos)),
        }
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn decode(bytes: &[u8]) -> std::result::Result<(NetworkSpec, ParamSet<f32>), String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err("not a segmentation checkpoint (bad magic)".into());
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(format!("unsupported checkpoint version {version}"));
    }
    let spec = NetworkSpec {
        depth: r.u32()? as usize,
        base_channels: r.u32()? as usize,
        in_channels: r.u32()? as usize,
    };
    spec.validate().map_err(|e| e.to_string())?;
    let kernel = r.u32()? as usize;
    if kernel != KERNEL {
        return Err(format!("unsupported kernel size {kernel}"));
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| "tensor name is not UTF-8".to_string())?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or("tensor too large")?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    let params = ParamSet::from_tensors(tensors);
    params
        .check_compatible(&ParamSet::<f32>::zeros(&spec))
        .map_err(|_| "tensor layout does not match the network spec".to_string())?;
    Ok((spec, params))
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(NetworkSpec, ParamSet<f32>)> {
    decode(bytes).map_err(|m| Error::format("<checkpoint>", m))
}

pub fn save_checkpoint<T: Real>(path: &Path, spec: &NetworkSpec, params: &ParamSet<T>) -> Result<()> {
    let bytes = encode_checkpoint(spec, params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(NetworkSpec, ParamSet<f32>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|m| Error::format(path, m))
}
