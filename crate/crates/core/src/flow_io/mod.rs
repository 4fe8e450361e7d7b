//! Flow, frame and mask ingestion, plus the synthetic scene generator.

mod flo;
mod pnm;
pub mod synth;

use std::path::Path;

pub use flo::{encode_flo, read_flo, write_flo, FlowPlane, FLO_MAGIC};
pub use pnm::{read_pgm, read_ppm, write_pgm, write_ppm, Image8};
pub use synth::{synth_corpus, synth_scene, CorpusSpec, ObjectShape, SynthScene, SynthSceneSpec};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::video::{GroundTruthMasks, VideoDims, VideoVolume};

/// Dense forward and backward flow for every consecutive frame pair.
///
/// `forward[i]` maps frame `i` to `i + 1` and is sampled on frame `i`;
/// `backward[i]` maps frame `i + 1` to `i` and is sampled on frame `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    dims: VideoDims,
    forward: Vec<FlowPlane>,
    backward: Vec<FlowPlane>,
}

impl FlowField {
    pub fn new(dims: VideoDims, forward: Vec<FlowPlane>, backward: Vec<FlowPlane>) -> Result<Self> {
        dims.validate()?;
        for (what, planes) in [("forward flow", &forward), ("backward flow", &backward)] {
            if planes.len() != dims.frames - 1 {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: dims.frames - 1,
                    found: planes.len(),
                });
            }
            for p in planes {
                if p.height() != dims.height || p.width() != dims.width {
                    return Err(Error::DimensionMismatch {
                        what,
                        expected: dims.frame_len(),
                        found: p.height() * p.width(),
                    });
                }
                if p.data().iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { what });
                }
            }
        }
        Ok(Self {
            dims,
            forward,
            backward,
        })
    }

    /// All-zero flow: every chain stays on its pixel.
    pub fn zeros(dims: VideoDims) -> Result<Self> {
        let planes = vec![FlowPlane::zeros(dims.height, dims.width); dims.frames.saturating_sub(1)];
        Self::new(dims, planes.clone(), planes)
    }

    pub fn dims(&self) -> VideoDims {
        self.dims
    }

    pub fn forward(&self) -> &[FlowPlane] {
        &self.forward
    }

    pub fn backward(&self) -> &[FlowPlane] {
        &self.backward
    }

    /// Displacement leaving pixel `(r, c)` of frame `t` towards `t + 1`.
    #[inline]
    pub fn forward_from(&self, t: usize, r: usize, c: usize) -> Option<(f32, f32)> {
        self.forward.get(t).map(|p| p.get(r, c))
    }

    /// Displacement leaving pixel `(r, c)` of frame `t` towards `t - 1`.
    #[inline]
    pub fn backward_from(&self, t: usize, r: usize, c: usize) -> Option<(f32, f32)> {
        t.checked_sub(1)
            .and_then(|i| self.backward.get(i))
            .map(|p| p.get(r, c))
    }

    /// Per-pixel motion of frame `t`: the forward flow, or the negated
    /// backward flow on the last frame.
    pub fn motion_at(&self, t: usize, r: usize, c: usize) -> (f32, f32) {
        match self.forward_from(t, r, c) {
            Some(uv) => uv,
            None => {
                let (u, v) = self
                    .backward_from(t, r, c)
                    .expect("a video has at least two frames");
                (-u, -v)
            }
        }
    }
}

/// Reads `forward_%04d.flo` / `backward_%04d.flo` pairs from `dir`.
pub fn load_flow_dir(dir: impl AsRef<Path>) -> Result<FlowField> {
    let dir = dir.as_ref();
    let mut forward = Vec::new();
    let mut backward = Vec::new();
    loop {
        let i = forward.len();
        let f = dir.join(format!("forward_{i:04}.flo"));
        let b = dir.join(format!("backward_{i:04}.flo"));
        if !f.exists() && !b.exists() {
            break;
        }
        forward.push(read_flo(&f)?);
        backward.push(read_flo(&b)?);
    }
    let first = forward.first().ok_or_else(|| Error::Malformed {
        path: dir.to_path_buf(),
        reason: "no forward_0000.flo / backward_0000.flo found".into(),
    })?;
    let dims = VideoDims::new(forward.len() + 1, first.height(), first.width());
    FlowField::new(dims, forward, backward)
}

pub fn save_flow_dir(flow: &FlowField, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fsutil::create_dir_all(dir)?;
    for (i, (f, b)) in flow.forward.iter().zip(&flow.backward).enumerate() {
        fsutil::write_atomic(&dir.join(format!("forward_{i:04}.flo")), &encode_flo(f)?)?;
        fsutil::write_atomic(&dir.join(format!("backward_{i:04}.flo")), &encode_flo(b)?)?;
    }
    Ok(())
}

/// Reads every `*.ppm` in `dir`, in name order, as one video.
pub fn load_frames_dir(dir: impl AsRef<Path>) -> Result<VideoVolume> {
    let dir = dir.as_ref();
    let files = fsutil::list_with_extension(dir, "ppm")?;
    let mut pixels = Vec::new();
    let mut size = None;
    for (t, file) in files.iter().enumerate() {
        let img = read_ppm(file)?;
        match size {
            None => size = Some((img.height, img.width)),
            Some(hw) if hw != (img.height, img.width) => {
                return Err(Error::ShapeMismatch {
                    frame: t,
                    expected: vec![hw.0, hw.1],
                    found: vec![img.height, img.width],
                })
            }
            _ => {}
        }
        pixels.extend(img.data.iter().map(|&v| v as f32 / 255.0));
    }
    let (h, w) = size.ok_or_else(|| Error::Malformed {
        path: dir.to_path_buf(),
        reason: "no .ppm frames found".into(),
    })?;
    VideoVolume::new(VideoDims::new(files.len(), h, w), pixels)
}

pub fn save_frames_dir(video: &VideoVolume, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fsutil::create_dir_all(dir)?;
    let dims = video.dims();
    for t in 0..dims.frames {
        let img = Image8 {
            height: dims.height,
            width: dims.width,
            channels: 3,
            data: video.frame(t).iter().map(|&v| to_u8(v)).collect(),
        };
        write_ppm(dir.join(format!("frame_{t:04}.ppm")), &img)?;
    }
    Ok(())
}

/// Reads every `*.pgm` in `dir`, in name order; values >= 128 are foreground.
pub fn load_masks_dir(dir: impl AsRef<Path>) -> Result<GroundTruthMasks> {
    let dir = dir.as_ref();
    let files = fsutil::list_with_extension(dir, "pgm")?;
    let mut labels = Vec::new();
    let mut size = None;
    for (t, file) in files.iter().enumerate() {
        let img = read_pgm(file)?;
        match size {
            None => size = Some((img.height, img.width)),
            Some(hw) if hw != (img.height, img.width) => {
                return Err(Error::ShapeMismatch {
                    frame: t,
                    expected: vec![hw.0, hw.1],
                    found: vec![img.height, img.width],
                })
            }
            _ => {}
        }
        labels.extend(img.data.iter().map(|&v| u8::from(v >= 128)));
    }
    let (h, w) = size.ok_or_else(|| Error::Malformed {
        path: dir.to_path_buf(),
        reason: "no .pgm masks found".into(),
    })?;
    GroundTruthMasks::new(VideoDims::new(files.len(), h, w), labels)
}

pub fn save_masks_dir(masks: &GroundTruthMasks, dir: impl AsRef<Path>, prefix: &str) -> Result<()> {
    let dir = dir.as_ref();
    fsutil::create_dir_all(dir)?;
    let dims = masks.dims();
    for t in 0..dims.frames {
        let img = Image8 {
            height: dims.height,
            width: dims.width,
            channels: 1,
            data: masks.frame(t).iter().map(|&v| v * 255).collect(),
        };
        write_pgm(dir.join(format!("{prefix}_{t:04}.pgm")), &img)?;
    }
    Ok(())
}

#[inline]
pub(crate) fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flow_dir_round_trip() {
        let dims = VideoDims::new(3, 2, 2);
        let mut f0 = FlowPlane::zeros(2, 2);
        f0.set(1, 0, (0.5, -1.25));
        let planes = vec![f0, FlowPlane::zeros(2, 2)];
        let flow = FlowField::new(dims, planes.clone(), planes).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_flow_dir(&flow, dir.path()).unwrap();
        assert!(dir.path().join("forward_0001.flo").exists());
        assert_eq!(load_flow_dir(dir.path()).unwrap(), flow);
    }

    #[test]
    fn flow_plane_count_must_match() {
        let dims = VideoDims::new(3, 1, 1);
        let planes = vec![FlowPlane::zeros(1, 1)];
        assert!(FlowField::new(dims, planes.clone(), planes).is_err());
    }

    #[test]
    fn last_frame_motion_uses_negated_backward() {
        let dims = VideoDims::new(2, 1, 1);
        let mut b = FlowPlane::zeros(1, 1);
        b.set(0, 0, (-2.0, 1.0));
        let flow = FlowField::new(dims, vec![FlowPlane::zeros(1, 1)], vec![b]).unwrap();
        assert_eq!(flow.motion_at(1, 0, 0), (2.0, -1.0));
        assert_eq!(flow.motion_at(0, 0, 0), (0.0, 0.0));
    }
}
