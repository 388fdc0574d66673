//! `STNS` tensor files.
//!
//! ```text
//! magic   "STNS"            4 bytes
//! version u8 = 1
//! dtype   u8                0 = f32 LE, 1 = f64 LE
//! rank    u8
//! extents u64 LE × rank
//! payload row-major values
//! ```

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"STNS";
pub const VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

pub fn encode_tensor(t: &Tensor, dtype: DType) -> Vec<u8> {
    let mut out = Vec::with_capacity(7 + 8 * t.rank() + dtype.width() * t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dtype as u8);
    out.push(t.rank() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match dtype {
        DType::F32 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        DType::F64 => t.data().iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    out
}

/// Parses a tensor file image; `origin` only labels errors.
pub fn decode_tensor(bytes: &[u8], origin: &Path) -> Result<(Tensor, DType)> {
    let bad = |reason: String| Error::malformed(origin, reason);
    if bytes.len() < 7 || &bytes[..4] != MAGIC {
        return Err(bad("missing STNS magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(bad(format!("unsupported version {}", bytes[4])));
    }
    let dtype = match bytes[5] {
        0 => DType::F32,
        1 => DType::F64,
        other => return Err(bad(format!("unknown dtype {other}"))),
    };
    let rank = bytes[6] as usize;
    if rank == 0 {
        return Err(bad("rank 0".into()));
    }
    let header = 7 + 8 * rank;
    if bytes.len() < header {
        return Err(bad("truncated extents".into()));
    }
    let mut shape = Vec::with_capacity(rank);
    for chunk in bytes[7..header].chunks_exact(8) {
        let d = u64::from_le_bytes(chunk.try_into().expect("8 bytes"));
        shape.push(usize::try_from(d).map_err(|_| bad(format!("extent {d} too large")))?);
    }
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad("extent product overflows".into()))?;
    let payload = &bytes[header..];
    if Some(payload.len()) != count.checked_mul(dtype.width()) {
        return Err(bad(format!(
            "payload is {} bytes, expected {} for shape {shape:?}",
            payload.len(),
            count * dtype.width()
        )));
    }
    let data = match dtype {
        DType::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        DType::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
    };
    let tensor = Tensor::new(shape, data).map_err(|e| bad(e.to_string()))?;
    Ok((tensor, dtype))
}

pub fn write_tensor(path: &Path, t: &Tensor, dtype: DType) -> Result<()> {
    write_atomic(path, &encode_tensor(t, dtype))
}

pub fn read_tensor(path: &Path) -> Result<Tensor> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_tensor(&bytes, path)?.0)
}
