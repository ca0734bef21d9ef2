//! Binary checkpoint format, all integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes  "SEMSTYLE"
//! version      u32      currently 1
//! config       9 x u64  stage widths (5), context width, head widths (2), seed
//! tensors      u32      number of parameter tensors
//! per tensor:  u32 rank, rank x u64 dims, prod(dims) x f64 values
//! ```
//!
//! Tensors are stored in parameter order: every backbone convolution's
//! weight then bias, followed by the three head layers.

use std::path::Path;

use super::{BackboneConfig, StylizeNet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SEMSTYLE";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn usize(&mut self) -> std::result::Result<usize, String> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| format!("value {v} does not fit in usize"))
    }
}

impl StylizeNet {
    pub fn to_bytes(&self) -> Vec<u8> {
        let c = &self.config;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let fields = c
            .stage_channels
            .iter()
            .chain(std::iter::once(&c.context_channels))
            .chain(&c.head_hidden)
            .map(|&v| v as u64)
            .chain(std::iter::once(c.seed));
        for v in fields {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.shape().len() as u32).to_le_bytes());
            for &d in p.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in p.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err("not a checkpoint (bad magic)".into());
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(format!("unsupported version {version}, expected {CHECKPOINT_VERSION}"));
        }
        let mut stage_channels = [0; 5];
        for s in &mut stage_channels {
            *s = r.usize()?;
        }
        let context_channels = r.usize()?;
        let head_hidden = [r.usize()?, r.usize()?];
        let seed = r.u64()?;
        let config = BackboneConfig {
            stage_channels,
            context_channels,
            head_hidden,
            seed,
        };
        config.validate().map_err(|e| e.to_string())?;

        let expected = config.param_shapes();
        let count = r.u32()? as usize;
        if count != expected.len() {
            return Err(format!("{count} tensors, expected {}", expected.len()));
        }
        let mut params = Vec::with_capacity(count);
        for (i, want) in expected.iter().enumerate() {
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.usize()).collect::<std::result::Result<Vec<_>, _>>()?;
            if &shape != want {
                return Err(format!("tensor {i} has shape {shape:?}, expected {want:?}"));
            }
            let n: usize = shape.iter().product();
            let raw = r.take(n * 8)?;
            let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            params.push(Tensor::new(shape, data).map_err(|e| e.to_string())?);
        }
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Self::from_parts(config, params).map_err(|e| e.to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|reason| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }
}
