//! Node-level features gathered along motion chains.
//!
//! Each pixel carries a short feature vector (the concatenation of every
//! registered source). A node's row in `F` concatenates the pixel features
//! met on its backward chain (`q` steps, oldest first), at the node itself,
//! and on its forward chain (`q` steps). Chains that stop early repeat their
//! last node so every row has the same width.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow_io::FlowField;
use crate::motion_graph::ChainIndex;
use crate::video::VideoDims;

/// Widest supported feature row, bias included.
pub const MAX_FEATURE_DIM: usize = 99;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSource {
    pub name: String,
    pub channels: usize,
    /// `n x channels`, node-major.
    pub data: Vec<f64>,
}

/// Per-pixel feature planes sharing one video geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMapSet {
    dims: VideoDims,
    sources: Vec<FeatureSource>,
}

impl FeatureMapSet {
    pub fn new(dims: VideoDims) -> Self {
        Self {
            dims,
            sources: Vec::new(),
        }
    }

    /// Flow displacements `(u, v)` per pixel (two channels).
    pub fn from_flow(flow: &FlowField) -> Self {
        let dims = flow.dims();
        let mut data = Vec::with_capacity(dims.nodes() * 2);
        for t in 0..dims.frames {
            for r in 0..dims.height {
                for c in 0..dims.width {
                    let (u, v) = flow.motion_at(t, r, c);
                    data.push(u as f64);
                    data.push(v as f64);
                }
            }
        }
        let mut set = Self::new(dims);
        set.sources.push(FeatureSource {
            name: "flow".into(),
            channels: 2,
            data,
        });
        set
    }

    pub fn dims(&self) -> VideoDims {
        self.dims
    }

    pub fn sources(&self) -> &[FeatureSource] {
        &self.sources
    }

    /// Total channels per pixel.
    pub fn channels(&self) -> usize {
        self.sources.iter().map(|s| s.channels).sum()
    }

    pub fn push(&mut self, name: impl Into<String>, channels: usize, data: Vec<f64>) -> Result<()> {
        if channels == 0 || data.len() != self.dims.nodes() * channels {
            return Err(Error::DimensionMismatch {
                what: "feature plane",
                expected: self.dims.nodes() * channels.max(1),
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature plane",
            });
        }
        self.sources.push(FeatureSource {
            name: name.into(),
            channels,
            data,
        });
        Ok(())
    }

    fn write_pixel(&self, node: usize, out: &mut [f64]) {
        let mut k = 0;
        for s in &self.sources {
            out[k..k + s.channels].copy_from_slice(&s.data[node * s.channels..(node + 1) * s.channels]);
            k += s.channels;
        }
    }
}

/// Dense row-major `n x d` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    bias: bool,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "feature matrix",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "feature matrix",
            });
        }
        Ok(Self {
            rows,
            cols,
            data,
            bias: false,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Whether the last column is the all-ones bias.
    pub fn has_bias(&self) -> bool {
        self.bias
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.iter().skip(j).step_by(self.cols).copied().collect()
    }

    /// Appends an all-ones column unless one is already present.
    pub fn with_bias(self) -> Self {
        if self.bias {
            return self;
        }
        let cols = self.cols + 1;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.push(1.0);
        }
        Self {
            rows: self.rows,
            cols,
            data,
            bias: true,
        }
    }

    /// Standardizes every non-bias column to zero mean and unit population
    /// standard deviation; zero-variance columns become all zeros.
    pub fn standardized(&self) -> Self {
        let mut out = self.clone();
        if self.rows < 2 || self.cols == 0 {
            return out;
        }
        let feature_cols = self.cols - usize::from(self.bias);
        let n = self.rows as f64;
        let mut mean = vec![0.0; feature_cols];
        for row in self.data.chunks_exact(self.cols) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; feature_cols];
        for row in self.data.chunks_exact(self.cols) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale: Vec<f64> = var
            .iter()
            .zip(&mean)
            .map(|(&s, m)| {
                let std = (s / n).sqrt();
                if std > 1e-12 * m.abs().max(1.0) {
                    1.0 / std
                } else {
                    0.0
                }
            })
            .collect();
        out.data.par_chunks_mut(self.cols).for_each(|row| {
            for ((v, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
                *v = (*v - m) * s;
            }
        });
        out
    }

    /// Drops columns that are zero or numerically in the span of earlier
    /// columns. The column space, and hence the projector onto it, is
    /// unchanged; the returned indices name the kept columns.
    pub fn prune_dependent(&self, rel_tol: f64) -> (Self, Vec<usize>) {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut kept = Vec::new();
        for j in 0..self.cols {
            let col = self.column(j);
            let norm0 = dot(&col, &col).sqrt();
            if norm0 == 0.0 {
                continue;
            }
            let mut r = col;
            // two passes of modified Gram-Schmidt for stability
            for _ in 0..2 {
                for q in &basis {
                    let c = dot(q, &r);
                    r.iter_mut().zip(q).for_each(|(ri, qi)| *ri -= c * qi);
                }
            }
            let norm = dot(&r, &r).sqrt();
            if norm > rel_tol * norm0 {
                r.iter_mut().for_each(|v| *v /= norm);
                basis.push(r);
                kept.push(j);
            }
        }
        let mut data = Vec::with_capacity(self.rows * kept.len());
        for i in 0..self.rows {
            let row = self.row(i);
            data.extend(kept.iter().map(|&j| row[j]));
        }
        let bias = self.bias && kept.last() == Some(&(self.cols - 1));
        (
            Self {
                rows: self.rows,
                cols: kept.len(),
                data,
                bias,
            },
            kept,
        )
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Chain nodes for `node` in temporal order: `q` backward, itself, `q` forward.
pub fn chain_window(chains: &ChainIndex, node: usize, q: usize, out: &mut Vec<usize>) {
    out.clear();
    out.resize(2 * q + 1, node);
    let mut last = node;
    let mut walk = chains.walk_bwd(node, q);
    for k in 1..=q {
        if let Some(b) = walk.next() {
            last = b;
        }
        out[q - k] = last;
    }
    last = node;
    let mut walk = chains.walk_fwd(node, q);
    for k in 1..=q {
        if let Some(b) = walk.next() {
            last = b;
        }
        out[q + k] = last;
    }
}

/// Builds `F` (no bias column) by concatenating pixel features along each
/// node's chain window of half-width `q`.
pub fn collect_features(chains: &ChainIndex, maps: &FeatureMapSet, q: usize) -> Result<FeatureMatrix> {
    let dims = chains.dims();
    if maps.dims() != dims {
        return Err(Error::DimensionMismatch {
            what: "feature maps vs chains",
            expected: dims.nodes(),
            found: maps.dims().nodes(),
        });
    }
    let c = maps.channels();
    let d = (2 * q + 1) * c;
    if d == 0 {
        return Err(Error::InvalidConfig("no feature channels registered".into()));
    }
    if d > MAX_FEATURE_DIM {
        return Err(Error::FeatureDimOverflow {
            d,
            max: MAX_FEATURE_DIM,
        });
    }
    let n = dims.nodes();
    let mut data = vec![0.0; n * d];
    data.par_chunks_mut(d).enumerate().for_each_init(Vec::new, |window, (j, row)| {
        chain_window(chains, j, q, window);
        for (slot, &node) in row.chunks_exact_mut(c).zip(window.iter()) {
            maps.write_pixel(node, slot);
        }
    });
    FeatureMatrix::new(n, d, data)
}

/// How `F` is assembled from feature maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureConfig {
    pub half_window: usize,
    pub standardize: bool,
    pub bias: bool,
    /// Drop linearly dependent columns (relative tolerance), keeping col(F).
    pub prune_tol: Option<f64>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            half_window: 1,
            standardize: true,
            bias: true,
            prune_tol: None,
        }
    }
}

/// Collects, standardizes, appends the bias and optionally prunes.
pub fn build_features(chains: &ChainIndex, maps: &FeatureMapSet, config: &FeatureConfig) -> Result<FeatureMatrix> {
    let d = (2 * config.half_window + 1) * maps.channels() + usize::from(config.bias);
    if d > MAX_FEATURE_DIM {
        return Err(Error::FeatureDimOverflow {
            d,
            max: MAX_FEATURE_DIM,
        });
    }
    let mut f = collect_features(chains, maps, config.half_window)?;
    if config.standardize {
        f = f.standardized();
    }
    if config.bias {
        f = f.with_bias();
    }
    if let Some(tol) = config.prune_tol {
        f = f.prune_dependent(tol).0;
    }
    Ok(f)
}
