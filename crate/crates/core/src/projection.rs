//! The projection step `x <- P x` without forming `P`.
//!
//! `P x = F w` with `w = (F^T F + lambda I)^{-1} F^T x`. The `d x d` system is
//! factored once per feature matrix and reused across iterations.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;

/// Rows per block in the parallel reductions. Block boundaries do not
/// depend on the thread count, so reductions are reproducible.
const ROW_BLOCK: usize = 4096;

/// Relative ridge used when none is configured: `1e-4 * trace(F^T F) / d`.
pub const AUTO_RIDGE_SCALE: f64 = 1e-4;

/// `F^T F` as a dense symmetric `d x d` matrix, accumulated in row blocks.
pub fn gram(f: &FeatureMatrix) -> Vec<f64> {
    let d = f.cols();
    let partials: Vec<Vec<f64>> = f
        .data()
        .par_chunks(ROW_BLOCK * d.max(1))
        .map(|block| {
            let mut g = vec![0.0; d * d];
            for row in block.chunks_exact(d) {
                for i in 0..d {
                    let ri = row[i];
                    if ri == 0.0 {
                        continue;
                    }
                    let gi = &mut g[i * d..(i + 1) * d];
                    for j in i..d {
                        gi[j] += ri * row[j];
                    }
                }
            }
            g
        })
        .collect();
    let mut g = vec![0.0; d * d];
    for p in &partials {
        g.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    for i in 0..d {
        for j in 0..i {
            g[i * d + j] = g[j * d + i];
        }
    }
    g
}

/// `F^T x`, block-reduced in a fixed order.
pub fn transpose_times(f: &FeatureMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let d = f.cols();
    check_len(f, x)?;
    let partials: Vec<Vec<f64>> = f
        .data()
        .par_chunks(ROW_BLOCK * d.max(1))
        .zip(x.par_chunks(ROW_BLOCK))
        .map(|(block, xs)| {
            let mut acc = vec![0.0; d];
            for (row, &xi) in block.chunks_exact(d).zip(xs) {
                acc.iter_mut().zip(row).for_each(|(a, r)| *a += r * xi);
            }
            acc
        })
        .collect();
    let mut out = vec![0.0; d];
    for p in &partials {
        out.iter_mut().zip(p).for_each(|(a, b)| *a += b);
    }
    Ok(out)
}

fn check_len(f: &FeatureMatrix, x: &[f64]) -> Result<()> {
    if x.len() != f.rows() {
        return Err(Error::DimensionMismatch {
            what: "label vector vs feature rows",
            expected: f.rows(),
            found: x.len(),
        });
    }
    Ok(())
}

/// Cached Cholesky factor of `F^T F + lambda I`.
#[derive(Debug, Clone)]
pub struct RidgeSolveCache {
    dim: usize,
    lambda: f64,
    gram: Vec<f64>,
    /// Lower-triangular `L` with `L L^T = F^T F + lambda I`, row-major.
    factor: Vec<f64>,
}

impl RidgeSolveCache {
    pub fn build(f: &FeatureMatrix, lambda: f64) -> Result<Self> {
        Self::from_gram(f.cols(), gram(f), lambda)
    }

    /// Uses the default ridge `1e-4 * trace(F^T F) / d`.
    pub fn build_auto(f: &FeatureMatrix) -> Result<Self> {
        let g = gram(f);
        let lambda = default_ridge(&g, f.cols());
        Self::from_gram(f.cols(), g, lambda)
    }

    pub fn from_gram(dim: usize, gram: Vec<f64>, lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "ridge strength must be finite and >= 0, got {lambda}"
            )));
        }
        if gram.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                what: "Gram matrix",
                expected: dim * dim,
                found: gram.len(),
            });
        }
        let mut a = gram.clone();
        for i in 0..dim {
            a[i * dim + i] += lambda;
        }
        let factor = cholesky(&a, dim)?;
        Ok(Self {
            dim,
            lambda,
            gram,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// `F^T F` without the ridge.
    pub fn gram(&self) -> &[f64] {
        &self.gram
    }

    /// Solves `(F^T F + lambda I) w = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let l = &self.factor;
        let mut y = b.to_vec();
        for i in 0..d {
            let s: f64 = (0..i).map(|k| l[i * d + k] * y[k]).sum();
            y[i] = (y[i] - s) / l[i * d + i];
        }
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|k| l[k * d + i] * y[k]).sum();
            y[i] = (y[i] - s) / l[i * d + i];
        }
        y
    }
}

pub fn default_ridge(gram: &[f64], dim: usize) -> f64 {
    if dim == 0 {
        return 0.0;
    }
    let trace: f64 = (0..dim).map(|i| gram[i * dim + i]).sum();
    AUTO_RIDGE_SCALE * trace / dim as f64
}

/// Cholesky factorization of a symmetric matrix; fails on pivots that are
/// not clearly positive relative to the largest diagonal entry.
fn cholesky(a: &[f64], d: usize) -> Result<Vec<f64>> {
    let max_diag = (0..d).map(|i| a[i * d + i].abs()).fold(0.0, f64::max);
    let floor = 1e-12 * max_diag.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let s: f64 = (0..j).map(|k| l[j * d + k] * l[j * d + k]).sum();
        let pivot = a[j * d + j] - s;
        if !(pivot > floor) {
            return Err(Error::SingularGram { column: j, pivot });
        }
        let ljj = pivot.sqrt();
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let s: f64 = (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum();
            l[i * d + j] = (a[i * d + j] - s) / ljj;
        }
    }
    Ok(l)
}

/// Ridge regression weights `w = (F^T F + lambda I)^{-1} F^T x`.
pub fn fit_weights(cache: &RidgeSolveCache, f: &FeatureMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if cache.dim() != f.cols() {
        return Err(Error::DimensionMismatch {
            what: "cache vs feature columns",
            expected: cache.dim(),
            found: f.cols(),
        });
    }
    let b = transpose_times(f, x)?;
    Ok(cache.solve(&b))
}

/// `P x = F w`.
pub fn project(cache: &RidgeSolveCache, f: &FeatureMatrix, x: &[f64]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; f.rows()];
    project_into(cache, f, x, &mut out)?;
    Ok(out)
}

pub fn project_into(cache: &RidgeSolveCache, f: &FeatureMatrix, x: &[f64], out: &mut [f64]) -> Result<()> {
    let w = fit_weights(cache, f, x)?;
    check_len(f, out)?;
    let d = f.cols();
    out.par_iter_mut()
        .with_min_len(2048)
        .zip(f.data().par_chunks(d.max(1)))
        .for_each(|(o, row)| *o = row.iter().zip(&w).map(|(a, b)| a * b).sum());
    Ok(())
}
