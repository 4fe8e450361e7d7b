//! Dense ground truth at small scale: explicit `M`, `P` and `A = P M P`,
//! dense power iteration, a deflated top-k spectrum and the eigenvector
//! perturbation bound.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::motion_graph::MotionGraph;
use crate::solver::{dot, l2};
use crate::tensor::{write_tensor, Tensor};

pub const MAX_EXPLICIT_NODES: usize = 8192;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "dense matrix data",
                expected: rows * cols,
                found: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
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

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn frobenius(&self) -> f64 {
        l2(&self.data)
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        t
    }

    /// Largest `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for r in 0..self.rows {
            for c in r + 1..self.cols.min(self.rows) {
                worst = worst.max((self.get(r, c) - self.get(c, r)).abs());
            }
        }
        worst
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                what: "dense matvec input",
                expected: self.cols,
                found: x.len(),
            });
        }
        Ok(self
            .data
            .par_chunks(self.cols.max(1))
            .with_min_len(64)
            .map(|row| dot(row, x))
            .collect())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                what: "dense matmul inner dimension",
                expected: self.cols,
                found: other.rows,
            });
        }
        let (k, m) = (self.cols, other.cols);
        let mut out = DenseMatrix::zeros(self.rows, m);
        if m == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(m)
            .zip(self.data.par_chunks(k.max(1)))
            .for_each(|(orow, arow)| {
                for (i, &a) in arow.iter().enumerate() {
                    if a != 0.0 {
                        for (o, &b) in orow.iter_mut().zip(other.row(i)) {
                            *o += a * b;
                        }
                    }
                }
            });
        Ok(out)
    }

    /// `self * other^T`.
    pub fn matmul_transposed(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                what: "dense matmul inner dimension",
                expected: self.cols,
                found: other.cols,
            });
        }
        let m = other.rows;
        let mut out = DenseMatrix::zeros(self.rows, m);
        if m == 0 {
            return Ok(out);
        }
        out.data
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(r, orow)| {
                let arow = self.row(r);
                for (c, o) in orow.iter_mut().enumerate() {
                    *o = dot(arow, other.row(c));
                }
            });
        Ok(out)
    }

    pub fn add(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::DimensionMismatch {
                what: "dense matrix sum",
                expected: self.data.len(),
                found: other.data.len(),
            });
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scaled(&self, s: f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn inverse(&self) -> Result<DenseMatrix> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch {
                what: "inverse of non-square matrix",
                expected: self.rows,
                found: self.cols,
            });
        }
        let n = self.rows;
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut a = self.clone();
        let mut inv = DenseMatrix::identity(n);
        for col in 0..n {
            let pivot_row = (col..n)
                .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
                .expect("nonempty range");
            let pivot = a.get(pivot_row, col);
            if !(pivot.abs() > 1e-13 * scale) {
                return Err(Error::SingularGram { column: col, pivot });
            }
            if pivot_row != col {
                swap_rows(&mut a, pivot_row, col);
                swap_rows(&mut inv, pivot_row, col);
            }
            let p = a.get(col, col);
            for c in 0..n {
                a.data[col * n + c] /= p;
                inv.data[col * n + c] /= p;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a.get(r, col);
                if factor == 0.0 {
                    continue;
                }
                for c in 0..n {
                    a.data[r * n + c] -= factor * a.data[col * n + c];
                    inv.data[r * n + c] -= factor * inv.data[col * n + c];
                }
            }
        }
        Ok(inv)
    }

    pub fn to_tensor(&self) -> Result<Tensor> {
        Tensor::from_f64(vec![self.rows, self.cols], &self.data)
    }

    pub fn write_tensor(&self, path: impl AsRef<Path>) -> Result<()> {
        write_tensor(path, &self.to_tensor()?)
    }
}

fn swap_rows(m: &mut DenseMatrix, a: usize, b: usize) {
    let n = m.cols;
    for c in 0..n {
        m.data.swap(a * n + c, b * n + c);
    }
}

fn feature_dense(f: &FeatureMatrix) -> DenseMatrix {
    DenseMatrix {
        rows: f.rows(),
        cols: f.cols(),
        data: f.data().to_vec(),
    }
}

pub fn densify(g: &MotionGraph) -> Result<DenseMatrix> {
    let n = g.nodes();
    if n > MAX_EXPLICIT_NODES {
        return Err(Error::TooLarge {
            n,
            cap: MAX_EXPLICIT_NODES,
        });
    }
    let mut m = DenseMatrix::zeros(n, n);
    for a in 0..n {
        for (b, w) in g.neighbors(a) {
            m.data[a * n + b] = w;
        }
    }
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct ExplicitGraph {
    pub m: DenseMatrix,
    pub p: DenseMatrix,
    pub a: DenseMatrix,
}

/// Materializes `M`, `P = F (F^T F + lambda I)^-1 F^T` and `A = P M P`.
///
/// The inverse comes from Gauss-Jordan elimination rather than the Cholesky
/// factorization used by the implicit path.
pub fn build_explicit(g: &MotionGraph, f: &FeatureMatrix, lambda: f64) -> Result<ExplicitGraph> {
    let n = g.nodes();
    if f.rows() != n {
        return Err(Error::DimensionMismatch {
            what: "feature rows",
            expected: n,
            found: f.rows(),
        });
    }
    let m = densify(g)?;
    let fd = feature_dense(f);
    let ft = fd.transpose();
    let mut gram = ft.matmul(&fd)?;
    for i in 0..gram.rows {
        gram.data[i * gram.cols + i] += lambda;
    }
    let z = fd.matmul(&gram.inverse()?)?;
    let p = z.matmul_transposed(&fd)?;
    let k = ft.matmul(&m.matmul(&fd)?)?;
    let a = z.matmul(&k)?.matmul_transposed(&z)?;
    Ok(ExplicitGraph { m, p, a })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult {
    pub vector: Vec<f64>,
    /// Rayleigh quotient of `vector`.
    pub value: f64,
    pub iterations: usize,
    /// `||A x - value x||`.
    pub residual: f64,
    pub converged: bool,
}

fn residual_ok(residual: f64, value: f64, tol: f64, floor: f64) -> bool {
    residual <= (tol * value.abs()).max(floor)
}

/// Power iteration on `A + shift I`; value and residual refer to `A`.
/// Converged once the residual is below `max(tol |value|, floor)`.
fn plain_power(
    a: &DenseMatrix,
    x0: &[f64],
    shift: f64,
    max_iters: usize,
    tol: f64,
    floor: f64,
) -> Result<PowerResult> {
    let norm = l2(x0);
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::InvalidConfig("power iteration needs a nonzero finite start".into()));
    }
    let mut x: Vec<f64> = x0.iter().map(|v| v / norm).collect();
    let mut ax = a.matvec(&x)?;
    let mut iterations = 0;
    loop {
        let value = dot(&x, &ax);
        let residual = l2(&ax.iter().zip(&x).map(|(p, q)| p - value * q).collect::<Vec<_>>());
        let converged = residual_ok(residual, value, tol, floor);
        if converged || iterations == max_iters {
            return Ok(PowerResult {
                vector: x,
                value,
                iterations,
                residual,
                converged,
            });
        }
        let shifted: Vec<f64> = ax.iter().zip(&x).map(|(p, q)| p + shift * q).collect();
        let norm = l2(&shifted);
        if !(norm > 0.0) {
            return Ok(PowerResult {
                vector: x,
                value: 0.0,
                iterations,
                residual,
                converged: false,
            });
        }
        x = shifted.iter().map(|v| v / norm).collect();
        ax = a.matvec(&x)?;
        iterations += 1;
    }
}

fn second_start(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_0b1e);
    (0..n).map(|_| rng.gen::<f64>() - 0.25).collect()
}

/// Power iteration `x <- A x / ||A x||` from `x0`.
///
/// A second run from a fixed pseudo-random start guards against a tied
/// dominant eigenvalue. Disagreement between the two runs, or no convergence
/// within `max_iters`, yields [`Error::NoConvergence`] carrying the best
/// iterate.
pub fn dense_power_iteration(
    a: &DenseMatrix,
    x0: &[f64],
    max_iters: usize,
    tol: f64,
) -> Result<PowerResult> {
    if !a.is_square() || a.rows() != x0.len() {
        return Err(Error::DimensionMismatch {
            what: "power iteration start vector",
            expected: a.rows(),
            found: x0.len(),
        });
    }
    let first = plain_power(a, x0, 0.0, max_iters, tol, 1e-12)?;
    if !first.converged {
        return Err(Error::NoConvergence {
            reason: format!(
                "residual {:.3e} after {} iterations",
                first.residual, first.iterations
            ),
            best: Box::new(first),
        });
    }
    let second = plain_power(a, &second_start(a.rows()), 0.0, max_iters, tol, 1e-12)?;
    let agree = dot(&first.vector, &second.vector).abs() >= 1.0 - 1e-6;
    let same_value = (first.value - second.value).abs() <= 1e-8 * first.value.abs().max(1e-300);
    if second.converged && (!agree || !same_value) {
        return Err(Error::NoConvergence {
            reason: "dominant eigenvalue is not separated (start vectors disagree)".into(),
            best: Box::new(first),
        });
    }
    Ok(first)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    /// Non-increasing.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
}

impl SpectrumReport {
    pub fn eigengap(&self) -> f64 {
        match self.eigenvalues.as_slice() {
            [a, b, ..] => a - b,
            _ => f64::NAN,
        }
    }

    pub fn ratio(&self) -> f64 {
        match self.eigenvalues.as_slice() {
            [a, b, ..] => a / b,
            _ => f64::NAN,
        }
    }

    /// `sum_{i < k} lambda_i v_i v_i^T`.
    pub fn reconstruct(&self, k: usize) -> DenseMatrix {
        let n = self.eigenvectors.first().map_or(0, Vec::len);
        let mut out = DenseMatrix::zeros(n, n);
        for (val, v) in self.eigenvalues.iter().zip(&self.eigenvectors).take(k) {
            for r in 0..n {
                for c in 0..n {
                    out.data[r * n + c] += val * v[r] * v[c];
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,eigenvalue,residual\n");
        for (i, (v, r)) in self.eigenvalues.iter().zip(&self.residuals).enumerate() {
            writeln!(s, "{},{:.12e},{:.3e}", i + 1, v, r).expect("write to string");
        }
        s
    }
}

/// Backward-error floor for eigenpairs found by [`spectrum`].
pub const SPECTRUM_BACKWARD_TOL: f64 = 1e-8;

pub const DEFAULT_SPECTRUM_K: usize = 6;

/// The k algebraically largest eigenpairs, in non-increasing order.
///
/// Pairs are extracted in order of magnitude by power iteration followed by
/// Hotelling deflation `A <- A - lambda v v^T`. A step that stalls on a
/// `+-lambda` tie is retried on `A + s I` with `s = ||A||_F`, which singles
/// out the positive member. Extraction stops once the k-th largest value
/// found is at least the bound `min(|last lambda|, ||A_deflated||_F)` on
/// everything left, so negative eigenvalues of large magnitude cannot crowd
/// out positive ones. A pair is accepted once its residual is below
/// `tol |lambda|` or `SPECTRUM_BACKWARD_TOL * ||A||_F`, whichever is larger.
pub fn spectrum(a: &DenseMatrix, k: usize) -> Result<SpectrumReport> {
    spectrum_with(a, k, 20_000, 1e-10)
}

pub fn spectrum_with(a: &DenseMatrix, k: usize, max_iters: usize, tol: f64) -> Result<SpectrumReport> {
    let n = a.rows();
    if !a.is_square() || k > n {
        return Err(Error::InvalidConfig(format!(
            "spectrum needs a square matrix and k <= n (k = {k}, shape {}x{})",
            a.rows(),
            a.cols()
        )));
    }
    let mut work = a.clone();
    let mut pairs: Vec<(f64, Vec<f64>)> = Vec::with_capacity(k);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_0b1e);
    let shift = a.frobenius();
    let floor = SPECTRUM_BACKWARD_TOL * shift;
    let mut bound = shift;
    while pairs.len() < n && !top_k_settled(&pairs, k, bound - floor) {
        let mut x0: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.25).collect();
        for _ in 0..2 {
            for (_, v) in &pairs {
                let c = dot(&x0, v);
                x0.iter_mut().zip(v).for_each(|(x, vi)| *x -= c * vi);
            }
        }
        let mut res = plain_power(&work, &x0, 0.0, max_iters, tol, floor)?;
        let by_magnitude = res.converged;
        if !by_magnitude {
            res = plain_power(&work, &x0, shift, max_iters, tol, floor)?;
        }
        if !res.converged && res.value != 0.0 {
            return Err(Error::NoConvergence {
                reason: format!("deflation step {} did not converge", pairs.len() + 1),
                best: Box::new(res),
            });
        }
        for r in 0..n {
            for c in 0..n {
                work.data[r * n + c] -= res.value * res.vector[r] * res.vector[c];
            }
        }
        if by_magnitude {
            bound = bound.min(res.value.abs());
        }
        bound = bound.min(work.frobenius());
        pairs.push((res.value, res.vector));
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs.truncate(k);
    let residuals = pairs
        .iter()
        .map(|(val, v)| {
            let av = a.matvec(v)?;
            Ok(l2(&av.iter().zip(v).map(|(p, q)| p - val * q).collect::<Vec<_>>()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (eigenvalues, eigenvectors) = pairs.into_iter().unzip();
    Ok(SpectrumReport {
        eigenvalues,
        eigenvectors,
        residuals,
    })
}

/// True when `pairs` holds k values and the k-th largest is at least
/// `threshold`.
fn top_k_settled(pairs: &[(f64, Vec<f64>)], k: usize, threshold: f64) -> bool {
    if pairs.len() < k {
        return false;
    }
    if k == 0 {
        return true;
    }
    let mut values: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    values.sort_by(|x, y| y.total_cmp(x));
    values[k - 1] >= threshold
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationReport {
    pub e_frobenius: f64,
    pub a_frobenius: f64,
    /// `8 ||E||_F / ||A*||_F`.
    pub epsilon: f64,
}

pub fn perturbation_bound(a_star: &DenseMatrix, e: &DenseMatrix) -> Result<PerturbationReport> {
    if (a_star.rows, a_star.cols) != (e.rows, e.cols) {
        return Err(Error::DimensionMismatch {
            what: "perturbation shape",
            expected: a_star.data.len(),
            found: e.data.len(),
        });
    }
    let e_frobenius = e.frobenius();
    let a_frobenius = a_star.frobenius();
    let epsilon = if e_frobenius == 0.0 {
        0.0
    } else {
        8.0 * e_frobenius / a_frobenius
    };
    Ok(PerturbationReport {
        e_frobenius,
        a_frobenius,
        epsilon,
    })
}

/// Symmetric Gaussian noise scaled to `relative * ||a||_F`.
pub fn symmetric_noise(a: &DenseMatrix, relative: f64, seed: u64) -> DenseMatrix {
    let n = a.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = DenseMatrix::zeros(n, n);
    for r in 0..n {
        for c in r..n {
            let v: f64 = rng.sample(StandardNormal);
            e.data[r * n + c] = v;
            e.data[c * n + r] = v;
        }
    }
    let scale = relative * a.frobenius() / e.frobenius().max(f64::MIN_POSITIVE);
    e.scaled(scale)
}

/// Angle in radians between two lines through the origin.
pub fn rotation_angle(u: &[f64], v: &[f64]) -> f64 {
    let c = (dot(u, v) / (l2(u) * l2(v))).abs().min(1.0);
    c.acos()
}

/// Permutes rows and columns so that foreground nodes come first, keeping
/// relative order inside each group. Returns the matrix and the permutation
/// (`perm[new] = old`).
pub fn reorder_foreground_first(a: &DenseMatrix, foreground: &[bool]) -> Result<(DenseMatrix, Vec<usize>)> {
    let n = a.rows();
    if !a.is_square() || foreground.len() != n {
        return Err(Error::DimensionMismatch {
            what: "reorder mask",
            expected: n,
            found: foreground.len(),
        });
    }
    let perm: Vec<usize> = (0..n)
        .filter(|&i| foreground[i])
        .chain((0..n).filter(|&i| !foreground[i]))
        .collect();
    let mut out = DenseMatrix::zeros(n, n);
    for (nr, &or) in perm.iter().enumerate() {
        for (nc, &oc) in perm.iter().enumerate() {
            out.data[nr * n + nc] = a.get(or, oc);
        }
    }
    Ok((out, perm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_io::FlowField;
    use crate::motion_graph::{build_chains, build_motion_graph, temporal_kernel};
    use crate::video::VideoDims;

    #[test]
    fn diagonal_power_iteration() {
        let a = DenseMatrix::diagonal(&[3.0, 1.0]);
        let r = dense_power_iteration(&a, &[1.0, 1.0], 1000, 1e-12).unwrap();
        assert!((r.value - 3.0).abs() < 1e-10);
        assert!((r.vector[0].abs() - 1.0).abs() < 1e-10);
        assert!(r.residual <= 1e-12f64.max(1e-12 * 3.0));
    }

    #[test]
    fn identity_is_flagged_with_unchanged_best_iterate() {
        let a = DenseMatrix::identity(3);
        let x0 = [0.6, 0.0, 0.8];
        match dense_power_iteration(&a, &x0, 100, 1e-12) {
            Err(Error::NoConvergence { best, .. }) => {
                assert_eq!(best.vector, x0.to_vec());
                assert!((best.value - 1.0).abs() < 1e-15);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn block_matrix_matches_characteristic_polynomial() {
        let mut a = DenseMatrix::zeros(8, 8);
        for r in 0..8 {
            for c in 0..8 {
                a.set(r, c, if r < 4 && c < 4 { 1.0 } else { 0.01 });
            }
        }
        // The nonzero spectrum lives on span{1_top, 1_bottom}: [[4, .04], [.04, .04]].
        let expected = (4.04 + 15.688f64.sqrt()) / 2.0;
        let r = dense_power_iteration(&a, &[1.0; 8], 10_000, 1e-13).unwrap();
        assert!((r.value - expected).abs() < 1e-10, "{} vs {expected}", r.value);
        let top: f64 = r.vector[..4].iter().map(|v| v * v).sum();
        assert!(top > 0.99);
    }

    #[test]
    fn spectrum_of_diagonal() {
        let s = spectrum(&DenseMatrix::diagonal(&[1.0, 5.0, 2.0]), 3).unwrap();
        for (got, want) in s.eigenvalues.iter().zip([5.0, 2.0, 1.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert!((s.eigengap() - 3.0).abs() < 1e-9);
        assert!((s.ratio() - 2.5).abs() < 1e-9);
        assert!(s.to_csv().starts_with("index,eigenvalue,residual\n1,5.0"));
    }

    #[test]
    fn reconstruction_improves_with_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 6;
        let mut a = DenseMatrix::zeros(n, n);
        for r in 0..n {
            for c in r..n {
                let v: f64 = rng.gen_range(0.0..1.0) + if r == c { 3.0 * r as f64 } else { 0.0 };
                a.set(r, c, v);
                a.set(c, r, v);
            }
        }
        let s = spectrum(&a, n).unwrap();
        assert!(s.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
        let errs: Vec<f64> = (0..=n)
            .map(|k| a.add(&s.reconstruct(k).scaled(-1.0)).unwrap().frobenius())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{errs:?}");
        assert!(errs[n] < SPECTRUM_BACKWARD_TOL * errs[0], "{errs:?}");
    }

    #[test]
    fn spectrum_orders_algebraically_past_large_negative_eigenvalues() {
        let s = spectrum(&DenseMatrix::diagonal(&[3.0, -2.5, 1.0, 0.0]), 3).unwrap();
        let want = [3.0, 1.0, 0.0];
        for (got, want) in s.eigenvalues.iter().zip(want) {
            assert!((got - want).abs() < 1e-9, "{:?}", s.eigenvalues);
        }
    }

    #[test]
    fn spectrum_separates_opposite_pairs() {
        let s = spectrum(&DenseMatrix::diagonal(&[2.0, -2.0, 1.0]), 2).unwrap();
        assert!((s.eigenvalues[0] - 2.0).abs() < 1e-9, "{:?}", s.eigenvalues);
        assert!((s.eigenvalues[1] - 1.0).abs() < 1e-9, "{:?}", s.eigenvalues);
        let all = spectrum(&DenseMatrix::diagonal(&[2.0, -2.0, 1.0]), 3).unwrap();
        assert!((all.eigenvalues[2] + 2.0).abs() < 1e-9, "{:?}", all.eigenvalues);
        assert!(s.residuals.iter().all(|r| *r < 1e-7));
    }

    #[test]
    fn spectrum_handles_near_null_clusters() {
        let mut d = vec![0.0; 40];
        d[0] = 3.0;
        d[1] = 0.5;
        d[2] = -1.6e-4;
        d[3] = -0.7;
        let s = spectrum(&DenseMatrix::diagonal(&d), 6).unwrap();
        assert!((s.eigenvalues[0] - 3.0).abs() < 1e-9);
        assert!((s.eigenvalues[1] - 0.5).abs() < 1e-9);
        assert!((s.ratio() - 6.0).abs() < 1e-6);
    }

    #[test]
    fn perturbation_examples() {
        let a = DenseMatrix::diagonal(&[2.0, 1.0]);
        let zero = DenseMatrix::zeros(2, 2);
        assert_eq!(perturbation_bound(&a, &zero).unwrap().epsilon, 0.0);
        let e = a.scaled(1.0 / 8.0);
        assert!((perturbation_bound(&a, &e).unwrap().epsilon - 1.0).abs() < 1e-15);
        let noise = symmetric_noise(&a, 0.01, 3);
        assert!((noise.frobenius() / a.frobenius() - 0.01).abs() < 1e-12);
        assert_eq!(noise.asymmetry(), 0.0);
    }

    #[test]
    fn two_frame_single_pixel_graph() {
        let flow = FlowField::zeros(VideoDims::new(2, 1, 1)).unwrap();
        let g = build_motion_graph(&build_chains(&flow), 1, 2.0).unwrap();
        let m = densify(&g).unwrap();
        let k1 = temporal_kernel(1.0, 2.0).unwrap();
        assert_eq!(m.data(), &[0.0, k1, k1, 0.0]);
    }

    #[test]
    fn identity_features_give_a_equal_m() {
        let flow = FlowField::zeros(VideoDims::new(3, 2, 2)).unwrap();
        let g = build_motion_graph(&build_chains(&flow), 2, 1.5).unwrap();
        let n = g.nodes();
        let f = FeatureMatrix::new(n, n, DenseMatrix::identity(n).data().to_vec()).unwrap();
        let e = build_explicit(&g, &f, 0.0).unwrap();
        for (p, i) in e.p.data().iter().zip(DenseMatrix::identity(n).data()) {
            assert!((p - i).abs() < 1e-12);
        }
        for (a, m) in e.a.data().iter().zip(e.m.data()) {
            assert!((a - m).abs() < 1e-12);
        }
    }

    #[test]
    fn size_cap() {
        let flow = FlowField::zeros(VideoDims::new(2, 91, 46)).unwrap();
        let g = build_motion_graph(&build_chains(&flow), 1, 2.0).unwrap();
        assert!(matches!(densify(&g), Err(Error::TooLarge { n: 8372, .. })));
    }

    #[test]
    fn inverse_round_trip() {
        let a = DenseMatrix::from_row_major(3, 3, vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]).unwrap();
        let prod = a.matmul(&a.inverse().unwrap()).unwrap();
        for (p, i) in prod.data().iter().zip(DenseMatrix::identity(3).data()) {
            assert!((p - i).abs() < 1e-12);
        }
        let singular = DenseMatrix::from_row_major(2, 2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(matches!(singular.inverse(), Err(Error::SingularGram { .. })));
    }

    #[test]
    fn reorder_puts_foreground_first() {
        let a = DenseMatrix::diagonal(&[1.0, 2.0, 3.0]);
        let (b, perm) = reorder_foreground_first(&a, &[false, true, false]).unwrap();
        assert_eq!(perm, vec![1, 0, 2]);
        assert_eq!(b.get(0, 0), 2.0);
        assert_eq!(b.get(1, 1), 1.0);
    }
}
