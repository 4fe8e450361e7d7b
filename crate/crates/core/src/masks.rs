//! Label vectors to per-frame masks, plus J Mean and MAE.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow_io::{to_u8, write_pgm, Image8};
use crate::fsutil::{create_dir_all, write_atomic};
use crate::video::{GroundTruthMasks, VideoDims};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMasks {
    dims: VideoDims,
    soft: Vec<f32>,
    binary: Vec<u8>,
    threshold: f64,
    constant: bool,
}

impl SegmentationMasks {
    /// Masks from soft values already in `[0, 1]`.
    pub fn from_soft(dims: VideoDims, soft: Vec<f32>, threshold: f64) -> Result<Self> {
        if soft.len() != dims.nodes() {
            return Err(Error::DimensionMismatch {
                what: "soft masks",
                expected: dims.nodes(),
                found: soft.len(),
            });
        }
        if soft.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidConfig("soft mask values must lie in [0, 1]".into()));
        }
        let binary = soft.iter().map(|&s| u8::from(s as f64 >= threshold)).collect();
        Ok(Self {
            dims,
            soft,
            binary,
            threshold,
            constant: false,
        })
    }

    pub fn dims(&self) -> VideoDims {
        self.dims
    }

    pub fn soft(&self) -> &[f32] {
        &self.soft
    }

    pub fn binary(&self) -> &[u8] {
        &self.binary
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Set when every entry of the source vector was equal.
    pub fn is_constant(&self) -> bool {
        self.constant
    }

    pub fn soft_frame(&self, t: usize) -> &[f32] {
        let len = self.dims.frame_len();
        &self.soft[t * len..(t + 1) * len]
    }

    pub fn binary_frame(&self, t: usize) -> &[u8] {
        let len = self.dims.frame_len();
        &self.binary[t * len..(t + 1) * len]
    }

    pub fn foreground_count(&self) -> usize {
        self.binary.iter().map(|&b| b as usize).sum()
    }

    /// `soft_%04d.pgm` (8-bit) and `mask_%04d.pgm` (0/255) per frame.
    pub fn write_pgm_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        create_dir_all(dir)?;
        let (h, w) = (self.dims.height, self.dims.width);
        for t in 0..self.dims.frames {
            let soft = Image8 {
                height: h,
                width: w,
                channels: 1,
                data: self.soft_frame(t).iter().map(|&v| to_u8(v)).collect(),
            };
            write_pgm(dir.join(format!("soft_{t:04}.pgm")), &soft)?;
            let bin = Image8 {
                height: h,
                width: w,
                channels: 1,
                data: self.binary_frame(t).iter().map(|&b| b * 255).collect(),
            };
            write_pgm(dir.join(format!("mask_{t:04}.pgm")), &bin)?;
        }
        Ok(())
    }
}

pub fn to_masks(x: &[f64], dims: VideoDims, threshold: f64) -> Result<SegmentationMasks> {
    if x.len() != dims.nodes() {
        return Err(Error::DimensionMismatch {
            what: "label vector",
            expected: dims.nodes(),
            found: x.len(),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "label vector",
        });
    }
    let first = x.first().copied().unwrap_or(0.0);
    if x.iter().all(|&v| v == first) {
        let mut masks = SegmentationMasks::from_soft(dims, vec![0.5; x.len()], threshold)?;
        masks.constant = true;
        return Ok(masks);
    }
    let clamped = x.iter().map(|&v| v.max(0.0));
    let (lo, hi) = clamped
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let soft: Vec<f32> = if span > 0.0 {
        clamped.map(|v| ((v - lo) / span) as f32).collect()
    } else {
        vec![0.0; x.len()]
    };
    SegmentationMasks::from_soft(dims, soft, threshold)
}

fn check_dims(pred: VideoDims, gt: VideoDims) -> Result<()> {
    if pred != gt {
        return Err(Error::DimensionMismatch {
            what: "mask volume",
            expected: gt.nodes(),
            found: pred.nodes(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameScore {
    pub iou: f64,
    pub mae: f64,
    /// Neither mask has foreground; `iou` is set to 1.
    pub empty_union: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub jmean: f64,
    pub mae: f64,
    pub frames: Vec<FrameScore>,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,iou,mae,empty_union\n");
        for (t, f) in self.frames.iter().enumerate() {
            writeln!(s, "{t},{:.6},{:.6},{}", f.iou, f.mae, u8::from(f.empty_union)).expect("write to string");
        }
        writeln!(s, "mean,{:.6},{:.6},", self.jmean, self.mae).expect("write to string");
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

fn frame_iou(pred: &[u8], gt: &[u8]) -> (f64, bool) {
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &g) in pred.iter().zip(gt) {
        inter += (p & g) as usize;
        union += (p | g) as usize;
    }
    if union == 0 {
        (1.0, true)
    } else {
        (inter as f64 / union as f64, false)
    }
}

pub fn jmean(pred: &SegmentationMasks, gt: &GroundTruthMasks) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    let m = gt.dims().frames;
    let total: f64 = (0..m).map(|t| frame_iou(pred.binary_frame(t), gt.frame(t)).0).sum();
    Ok(total / m as f64)
}

pub fn mae(pred: &SegmentationMasks, gt: &GroundTruthMasks) -> Result<f64> {
    check_dims(pred.dims(), gt.dims())?;
    Ok(soft_mae(pred.soft(), gt.labels()))
}

fn soft_mae(soft: &[f32], gt: &[u8]) -> f64 {
    let sum: f64 = soft.iter().zip(gt).map(|(&s, &g)| (s as f64 - g as f64).abs()).sum();
    sum / soft.len().max(1) as f64
}

pub fn evaluate(pred: &SegmentationMasks, gt: &GroundTruthMasks) -> Result<MetricsReport> {
    check_dims(pred.dims(), gt.dims())?;
    let frames: Vec<FrameScore> = (0..gt.dims().frames)
        .map(|t| {
            let (iou, empty_union) = frame_iou(pred.binary_frame(t), gt.frame(t));
            FrameScore {
                iou,
                mae: soft_mae(pred.soft_frame(t), gt.frame(t)),
                empty_union,
            }
        })
        .collect();
    let m = frames.len() as f64;
    Ok(MetricsReport {
        jmean: frames.iter().map(|f| f.iou).sum::<f64>() / m,
        mae: frames.iter().map(|f| f.mae).sum::<f64>() / m,
        frames,
    })
}

/// `100 (v2 - v1) / v1`.
pub fn relative_change(v1: f64, v2: f64) -> Result<f64> {
    if v1 == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok(100.0 * (v2 - v1) / v1)
}
