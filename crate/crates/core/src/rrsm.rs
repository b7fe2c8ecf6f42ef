//! RRSM map files.
//!
//! ```text
//! offset 0   4 bytes  magic "RRSM"
//! offset 4   u16 LE   version (1)
//! offset 6   u32 LE   height
//! offset 10  u32 LE   width
//! offset 14  u32 LE   channels
//! offset 18  f32 LE * height*width*channels, row-major, channels interleaved
//! ```

use std::path::Path;

use crate::error::{Error, FormatError, Result};
use crate::image::Dims;

pub const MAGIC: &[u8; 4] = b"RRSM";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 18;

/// Decoded file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct RrsmMap {
    pub dims: Dims,
    pub values: Vec<f32>,
}

impl RrsmMap {
    pub fn new(dims: Dims, values: Vec<f32>) -> Result<Self> {
        if values.len() != dims.len() {
            return Err(Error::DimMismatch {
                expected: dims.len(),
                found: values.len(),
            });
        }
        Ok(RrsmMap { dims, values })
    }

    /// Narrows `f64` values to `f32`.
    pub fn from_f64(dims: Dims, values: &[f64]) -> Result<Self> {
        RrsmMap::new(dims, values.iter().map(|&v| v as f32).collect())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for d in [self.dims.height, self.dims.width, self.dims.channels] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let take = |offset: usize, len: usize| -> Result<&[u8], FormatError> {
            bytes.get(offset..offset + len).ok_or_else(|| FormatError::Truncated {
                offset: bytes.len(),
                needed: offset + len - bytes.len(),
            })
        };
        let magic = take(0, 4)?;
        if magic != MAGIC {
            return Err(FormatError::BadMagic {
                found: magic.to_vec(),
            });
        }
        let version = u16::from_le_bytes(take(4, 2)?.try_into().unwrap());
        if version != VERSION {
            return Err(FormatError::UnsupportedVersion {
                found: version,
                supported: VERSION,
            });
        }
        let dim = |i: usize| -> Result<u32, FormatError> {
            Ok(u32::from_le_bytes(take(6 + 4 * i, 4)?.try_into().unwrap()))
        };
        let (height, width, channels) = (dim(0)?, dim(1)?, dim(2)?);
        if height == 0 || width == 0 || channels == 0 {
            return Err(FormatError::ZeroDim {
                height,
                width,
                channels,
            });
        }
        let payload = &bytes[HEADER_LEN..];
        // compare against the actual payload before allocating anything
        let expected = (height as u128) * (width as u128) * (channels as u128) * 4;
        let have = payload.len() as u128;
        if have < expected {
            return Err(FormatError::Truncated {
                offset: bytes.len(),
                needed: (expected - have).min(usize::MAX as u128) as usize,
            });
        }
        if have > expected {
            return Err(FormatError::PayloadMismatch {
                expected: (expected / 4) as usize,
                found: payload.len() / 4,
            });
        }
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(RrsmMap {
            dims: Dims::new(height as usize, width as usize, channels as usize),
            values,
        })
    }

    /// Fails with `DimsMismatch` unless the map has the given shape.
    pub fn expect_dims(&self, dims: Dims) -> Result<(), FormatError> {
        if self.dims != dims {
            return Err(FormatError::DimsMismatch {
                expected: dims.tuple(),
                found: self.dims.tuple(),
            });
        }
        Ok(())
    }
}

pub fn write_map(path: &Path, map: &RrsmMap) -> Result<()> {
    std::fs::write(path, map.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_map(path: &Path) -> Result<RrsmMap> {
    let bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(FormatError::Missing(path.to_path_buf()).into())
        }
        Err(e) => return Err(Error::io(format!("reading {}", path.display()), e)),
    };
    Ok(RrsmMap::from_bytes(&bytes)?)
}
