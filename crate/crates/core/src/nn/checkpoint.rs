//! `RALW` parameter checkpoints: magic, format version, tensor count, then per
//! tensor its rank, dims and little-endian `f32` data (row-major). All integers
//! are little-endian `u32`.

use std::path::Path;

use crate::binio::Reader;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"RALW";
pub const VERSION: u32 = 1;

pub fn encode<T: Scalar>(params: &[Tensor<T>]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for t in params {
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            let v = v.to_f32().expect("Scalar converts to f32");
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Vec<Tensor<f32>>> {
    let mut r = Reader::new(bytes, path);
    r.expect_magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.malformed(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        tensors.push(r.tensor()?);
    }
    r.expect_end()?;
    Ok(tensors)
}

pub fn save<T: Scalar>(path: &Path, params: &[Tensor<T>]) -> Result<()> {
    std::fs::write(path, encode(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<Tensor<f32>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
