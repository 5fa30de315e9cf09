//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic          8 bytes  "BMEMCKPT"
//! format         u32      = 1
//! version        u64      optimizer steps taken
//! config_hash    u64
//! vocab_size     u32
//! dim            u32
//! weights        vocab_size·dim × f64
//! ```
//!
//! Nothing may follow the weights.

use thiserror::Error;

use super::PolicyParameters;

pub const MAGIC: &[u8; 8] = b"BMEMCKPT";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 8 + 8 + 4 + 4;
/// Upper bound on `vocab_size · dim` accepted from a file.
pub const MAX_WEIGHTS: usize = 1 << 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format {0}")]
    UnsupportedFormat(u32),
    #[error("checkpoint truncated: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} trailing bytes after weights")]
    TrailingBytes(usize),
    #[error("checkpoint declares {0} weights, limit is {MAX_WEIGHTS}")]
    TooLarge(u64),
    #[error("weight {0} is not finite")]
    NonFinite(usize),
    #[error("checkpoint shape {found:?} does not match expected {expected:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("checkpoint config hash {found:016x} does not match {expected:016x}")]
    ConfigHashMismatch { expected: u64, found: u64 },
}

/// A decoded checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub params: PolicyParameters,
}

impl Checkpoint {
    /// Checks shape and config hash against what the caller expects.
    pub fn verify(
        &self,
        vocab_size: usize,
        dim: usize,
        config_hash: u64,
    ) -> Result<(), CheckpointError> {
        let found = (self.params.vocab_size(), self.params.dim());
        if found != (vocab_size, dim) {
            return Err(CheckpointError::ShapeMismatch {
                expected: (vocab_size, dim),
                found,
            });
        }
        if self.config_hash != config_hash {
            return Err(CheckpointError::ConfigHashMismatch {
                expected: config_hash,
                found: self.config_hash,
            });
        }
        Ok(())
    }
}

pub fn encode(params: &PolicyParameters, config_hash: u64) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.weights().len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&params.version().to_le_bytes());
    out.extend_from_slice(&config_hash.to_le_bytes());
    out.extend_from_slice(&(params.vocab_size() as u32).to_le_bytes());
    out.extend_from_slice(&(params.dim() as u32).to_le_bytes());
    for w in params.weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated {
            needed: usize::MAX,
            available: self.bytes.len(),
        })?;
        if end > self.bytes.len() {
            return Err(CheckpointError::Truncated {
                needed: end,
                available: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let format = r.u32()?;
    if format != FORMAT_VERSION {
        return Err(CheckpointError::UnsupportedFormat(format));
    }
    let version = r.u64()?;
    let config_hash = r.u64()?;
    let vocab_size = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let count = vocab_size as u64 * dim as u64;
    if count > MAX_WEIGHTS as u64 {
        return Err(CheckpointError::TooLarge(count));
    }
    let raw = r.take(count as usize * 8)?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    let weights: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
        return Err(CheckpointError::NonFinite(i));
    }
    let params = PolicyParameters::from_weights(vocab_size, dim, weights, version)
        .expect("weight count checked above");
    Ok(Checkpoint {
        config_hash,
        params,
    })
}
