//! `.stgt` tensor files, the interchange format between the graph and
//! external components.
//!
//! Layout (little-endian): magic `b"STGT"`, `u32` version (1), `u32` rank
//! (at most 4), `rank` x `u32` dims, then `prod(dims)` `f32` values in
//! row-major order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const TENSOR_MAGIC: &[u8; 4] = b"STGT";
pub const TENSOR_VERSION: u32 = 1;
pub const MAX_RANK: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.len() > MAX_RANK {
            return Err(Error::InvalidConfig(format!(
                "tensor rank {} exceeds {MAX_RANK}",
                dims.len()
            )));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::DimensionMismatch {
                what: "tensor payload",
                expected: len,
                found: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dims.len() as u32).to_le_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let malformed = |reason: String| Error::Malformed {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < 4 || &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                format: "STGT tensor",
            });
        }
        let word = |i: usize| -> Option<u32> {
            bytes
                .get(i..i + 4)
                .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        };
        let truncated = |expected: usize| Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        };
        let version = word(4).ok_or_else(|| truncated(12))?;
        if version != TENSOR_VERSION {
            return Err(malformed(format!("unsupported version {version}")));
        }
        let rank = word(8).ok_or_else(|| truncated(12))? as usize;
        if rank > MAX_RANK {
            return Err(malformed(format!("rank {rank} exceeds {MAX_RANK}")));
        }
        let header = 12 + 4 * rank;
        let dims: Vec<usize> = (0..rank)
            .map(|k| word(12 + 4 * k).map(|d| d as usize))
            .collect::<Option<_>>()
            .ok_or_else(|| truncated(header))?;
        let len: usize = dims.iter().product();
        let payload = &bytes[header.min(bytes.len())..];
        if payload.len() < 4 * len {
            return Err(Error::Truncated {
                path: path.to_path_buf(),
                expected: 4 * len,
                found: payload.len(),
            });
        }
        if payload.len() > 4 * len {
            return Err(malformed(format!("{} trailing bytes", payload.len() - 4 * len)));
        }
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        Ok(Self { dims, data })
    }
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes, path)
}

/// Writes atomically (temp file, then rename).
pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    crate::fsutil::write_atomic(path.as_ref(), &tensor.to_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_exact() {
        let t = Tensor::new(vec![2, 1], vec![1.0, -2.5]).unwrap();
        let b = t.to_bytes();
        assert_eq!(&b[..4], b"STGT");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..16], &2u32.to_le_bytes());
        assert_eq!(&b[16..20], &1u32.to_le_bytes());
        assert_eq!(&b[20..24], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 28);
    }

    #[test]
    fn rejects_bad_files() {
        let p = Path::new("t.stgt");
        assert!(matches!(
            Tensor::from_bytes(b"NOPE\x01\0\0\0\0\0\0\0", p),
            Err(Error::BadMagic { .. })
        ));
        let mut b = Tensor::new(vec![3], vec![0.0; 3]).unwrap().to_bytes();
        b.truncate(b.len() - 1);
        assert!(matches!(Tensor::from_bytes(&b, p), Err(Error::Truncated { .. })));
        let mut b = Tensor::new(vec![1], vec![0.0]).unwrap().to_bytes();
        b[8] = 5;
        assert!(matches!(Tensor::from_bytes(&b, p), Err(Error::Malformed { .. })));
        assert!(Tensor::new(vec![1; 5], vec![0.0]).is_err());
    }

    #[test]
    fn scalar_rank_zero() {
        let t = Tensor::new(vec![], vec![4.0]).unwrap();
        let back = Tensor::from_bytes(&t.to_bytes(), Path::new("s")).unwrap();
        assert_eq!(back, t);
    }

    proptest! {
        #[test]
        fn round_trip(dims in proptest::collection::vec(1usize..5, 0..=4), seed in any::<u32>()) {
            let len: usize = dims.iter().product();
            let data: Vec<f32> = (0..len).map(|i| f32::from_bits(seed.wrapping_add((i as u32).wrapping_mul(2654435761)) & 0x7f7f_ffff)).collect();
            let t = Tensor::new(dims, data).unwrap();
            let back = Tensor::from_bytes(&t.to_bytes(), Path::new("p")).unwrap();
            prop_assert_eq!(back.dims(), t.dims());
            for (a, b) in back.data().iter().zip(t.data()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
