//! Little-endian reader shared by the binary formats, reporting byte offsets on failure.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: PathBuf,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], path: &Path) -> Self {
        Self {
            bytes,
            pos: 0,
            path: path.to_path_buf(),
        }
    }

    pub fn pos(&self) -> usize {
        self.pos
    }

    pub fn malformed(&self, reason: impl Into<String>) -> Error {
        self.malformed_at(self.pos, reason)
    }

    pub fn malformed_at(&self, offset: usize, reason: impl Into<String>) -> Error {
        Error::Malformed {
            path: self.path.clone(),
            offset,
            reason: reason.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(self.malformed(format!(
                "truncated: need {n} bytes, have {available} (missing {} bytes)",
                n - available
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub fn expect_magic(&mut self, magic: &[u8]) -> Result<()> {
        let got = self.take(magic.len())?;
        if got != magic {
            return Err(self.malformed_at(
                0,
                format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(got),
                    String::from_utf8_lossy(magic)
                ),
            ));
        }
        Ok(())
    }

    /// rank u32, dims u32 x rank, then little-endian f32 data.
    pub fn tensor(&mut self) -> Result<Tensor<f32>> {
        let at = self.pos;
        let rank = self.u32()? as usize;
        if rank == 0 || rank > 8 {
            return Err(self.malformed_at(at, format!("unsupported tensor rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = self.u32()? as usize;
            if d == 0 {
                return Err(self.malformed(format!("zero dimension in shape (rank {rank})")));
            }
            dims.push(d);
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| self.malformed("tensor size overflows"))?;
        let raw = self.take(n)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Tensor::new(dims, data)
    }

    pub fn expect_end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.malformed(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}
