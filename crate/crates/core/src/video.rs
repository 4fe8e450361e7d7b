//! Video geometry and pixel containers.
//!
//! Nodes of the space-time graph are pixels, indexed frame-major then
//! row-major: `node = t * h * w + r * w + c`.

use crate::error::{Error, Result};

/// Frame count and frame size of a video volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VideoDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl VideoDims {
    pub fn new(frames: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            height,
            width,
        }
    }

    /// Pixels per frame.
    #[inline]
    pub fn frame_len(&self) -> usize {
        self.height * self.width
    }

    /// Total node count `n = m * h * w`.
    #[inline]
    pub fn nodes(&self) -> usize {
        self.frames * self.frame_len()
    }

    #[inline]
    pub fn node(&self, t: usize, r: usize, c: usize) -> usize {
        (t * self.height + r) * self.width + c
    }

    /// Inverse of [`VideoDims::node`].
    #[inline]
    pub fn coords(&self, node: usize) -> (usize, usize, usize) {
        let per = self.frame_len();
        let t = node / per;
        let rem = node % per;
        (t, rem / self.width, rem % self.width)
    }

    #[inline]
    pub fn frame_of(&self, node: usize) -> usize {
        node / self.frame_len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::InvalidConfig(format!(
                "a video needs at least 2 frames, got {}",
                self.frames
            )));
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidConfig(format!(
                "empty frame size {}x{}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

/// RGB video, intensities in `[0, 1]`, layout `m x h x w x 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoVolume {
    dims: VideoDims,
    pixels: Vec<f32>,
}

impl VideoVolume {
    pub fn new(dims: VideoDims, pixels: Vec<f32>) -> Result<Self> {
        dims.validate()?;
        if pixels.len() != dims.nodes() * 3 {
            return Err(Error::DimensionMismatch {
                what: "video pixels",
                expected: dims.nodes() * 3,
                found: pixels.len(),
            });
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig(
                "video intensities must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { dims, pixels })
    }

    pub fn dims(&self) -> VideoDims {
        self.dims
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// The `h x w x 3` slice of frame `t`.
    pub fn frame(&self, t: usize) -> &[f32] {
        let len = self.dims.frame_len() * 3;
        &self.pixels[t * len..(t + 1) * len]
    }
}

/// Binary object masks, layout `m x h x w`, values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruthMasks {
    dims: VideoDims,
    labels: Vec<u8>,
}

impl GroundTruthMasks {
    pub fn new(dims: VideoDims, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != dims.nodes() {
            return Err(Error::DimensionMismatch {
                what: "mask labels",
                expected: dims.nodes(),
                found: labels.len(),
            });
        }
        if labels.iter().any(|&v| v > 1) {
            return Err(Error::InvalidConfig("mask labels must be 0 or 1".into()));
        }
        Ok(Self { dims, labels })
    }

    pub fn dims(&self) -> VideoDims {
        self.dims
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let len = self.dims.frame_len();
        &self.labels[t * len..(t + 1) * len]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_coords_round_trip() {
        let dims = VideoDims::new(3, 4, 5);
        for node in 0..dims.nodes() {
            let (t, r, c) = dims.coords(node);
            assert_eq!(dims.node(t, r, c), node);
        }
        assert_eq!(dims.coords(dims.node(2, 3, 4)), (2, 3, 4));
    }

    #[test]
    fn rejects_single_frame() {
        assert!(VideoDims::new(1, 4, 4).validate().is_err());
    }
}
