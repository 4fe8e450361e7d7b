//! Middlebury `.flo` optical flow files.
//!
//! Layout: `f32` magic 202021.25, `i32` width, `i32` height, then
//! `h * w * 2` little-endian `f32` values, `(u, v)` interleaved, row-major.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const FLO_MAGIC: f32 = 202021.25;
const HEADER_LEN: usize = 12;

/// One dense flow field between two frames, `(u, v)` per pixel where `u`
/// is the horizontal (column) displacement and `v` the vertical (row) one.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPlane {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FlowPlane {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 2 {
            return Err(Error::DimensionMismatch {
                what: "flow plane",
                expected: height * width * 2,
                found: data.len(),
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 2],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> (f32, f32) {
        let i = (r * self.width + c) * 2;
        (self.data[i], self.data[i + 1])
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, uv: (f32, f32)) {
        let i = (r * self.width + c) * 2;
        self.data[i] = uv.0;
        self.data[i + 1] = uv.1;
    }
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowPlane> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes).map_err(|e| match e {
        DecodeError::BadMagic => Error::BadMagic {
            path: path.to_path_buf(),
            format: ".flo",
        },
        DecodeError::Truncated { expected, found } => Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found,
        },
        DecodeError::Malformed(reason) => Error::Malformed {
            path: path.to_path_buf(),
            reason,
        },
    })
}

pub fn write_flo(plane: &FlowPlane, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_flo(plane)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_flo(plane: &FlowPlane) -> Result<Vec<u8>> {
    if plane.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what: "flow plane" });
    }
    let mut out = Vec::with_capacity(HEADER_LEN + plane.data.len() * 4);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(plane.width as i32).to_le_bytes());
    out.extend_from_slice(&(plane.height as i32).to_le_bytes());
    for v in &plane.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

#[derive(Debug)]
enum DecodeError {
    BadMagic,
    Truncated { expected: usize, found: usize },
    Malformed(String),
}

fn decode_flo(bytes: &[u8]) -> std::result::Result<FlowPlane, DecodeError> {
    if bytes.len() < 4 || f32::from_le_bytes(le4(&bytes[0..4])) != FLO_MAGIC {
        return Err(DecodeError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(DecodeError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let width = i32::from_le_bytes(le4(&bytes[4..8]));
    let height = i32::from_le_bytes(le4(&bytes[8..12]));
    if width < 0 || height < 0 {
        return Err(DecodeError::Malformed(format!(
            "negative size {width}x{height}"
        )));
    }
    let (width, height) = (width as usize, height as usize);
    let expected = width * height * 8;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(DecodeError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(DecodeError::Malformed(format!(
            "{} trailing bytes",
            payload.len() - expected
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(le4(c)))
        .collect();
    Ok(FlowPlane {
        height,
        width,
        data,
    })
}

#[inline]
fn le4(b: &[u8]) -> [u8; 4] {
    [b[0], b[1], b[2], b[3]]
}
