//! Motion chains and the implicit motion matrix `M`.
//!
//! Two pixels are linked when a motion chain (repeatedly following forward or
//! backward flow) connects them within `radius` frames. `M[a][b]` is the
//! temporal Gaussian of their frame distance when linked and zero otherwise;
//! it is stored as deduplicated, symmetric CSR neighbour lists.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow_io::FlowField;
use crate::video::VideoDims;

/// Successor and predecessor of every node along its outgoing chains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainIndex {
    dims: VideoDims,
    fwd: Vec<Option<u32>>,
    bwd: Vec<Option<u32>>,
}

impl ChainIndex {
    pub fn dims(&self) -> VideoDims {
        self.dims
    }

    /// Node in frame `t + 1` reached by forward flow, if it lands in frame.
    #[inline]
    pub fn fwd(&self, node: usize) -> Option<usize> {
        self.fwd[node].map(|v| v as usize)
    }

    /// Node in frame `t - 1` reached by backward flow.
    #[inline]
    pub fn bwd(&self, node: usize) -> Option<usize> {
        self.bwd[node].map(|v| v as usize)
    }

    /// Up to `steps` nodes met walking forward from `node` (excluding it).
    pub fn walk_fwd(&self, node: usize, steps: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.fwd(node), move |&b| self.fwd(b)).take(steps)
    }

    pub fn walk_bwd(&self, node: usize, steps: usize) -> impl Iterator<Item = usize> + '_ {
        std::iter::successors(self.bwd(node), move |&b| self.bwd(b)).take(steps)
    }
}

/// Follows every pixel's flow vector one frame forward and one backward,
/// rounding to the nearest pixel (ties away from zero). Steps that leave
/// the frame produce no link.
pub fn build_chains(flow: &FlowField) -> ChainIndex {
    let dims = flow.dims();
    let n = dims.nodes();
    assert!(n <= u32::MAX as usize, "node count exceeds u32 range");
    let per = dims.frame_len();

    let step = |t: usize, r: usize, c: usize, uv: (f32, f32), to: usize| -> Option<u32> {
        let rr = (r as f64 + uv.1 as f64).round();
        let cc = (c as f64 + uv.0 as f64).round();
        if rr < 0.0 || cc < 0.0 || rr >= dims.height as f64 || cc >= dims.width as f64 {
            return None;
        }
        debug_assert!(to + 1 == t || t + 1 == to);
        Some(dims.node(to, rr as usize, cc as usize) as u32)
    };

    let mut fwd = vec![None; n];
    let mut bwd = vec![None; n];
    fwd.par_chunks_mut(per)
        .zip(bwd.par_chunks_mut(per))
        .enumerate()
        .for_each(|(t, (fwd_t, bwd_t))| {
            for r in 0..dims.height {
                for c in 0..dims.width {
                    let i = r * dims.width + c;
                    if let Some(uv) = flow.forward_from(t, r, c) {
                        fwd_t[i] = step(t, r, c, uv, t + 1);
                    }
                    if let Some(uv) = flow.backward_from(t, r, c) {
                        bwd_t[i] = step(t, r, c, uv, t - 1);
                    }
                }
            }
        });
    ChainIndex { dims, fwd, bwd }
}

/// `exp(-dt^2 / (2 sigma^2))`.
pub fn temporal_kernel(dt: f64, sigma_t: f64) -> Result<f64> {
    if !(sigma_t > 0.0) {
        return Err(Error::NonPositiveBandwidth(sigma_t));
    }
    Ok((-dt * dt / (2.0 * sigma_t * sigma_t)).exp())
}

/// The motion matrix as symmetric CSR neighbour lists.
#[derive(Debug, Clone)]
pub struct MotionGraph {
    dims: VideoDims,
    radius: usize,
    sigma_t: f64,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    weights: Vec<f64>,
}

impl MotionGraph {
    pub fn dims(&self) -> VideoDims {
        self.dims
    }

    pub fn nodes(&self) -> usize {
        self.dims.nodes()
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn sigma_t(&self) -> f64 {
        self.sigma_t
    }

    /// Undirected edge count (each stored twice).
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// `(neighbour, weight)` pairs of `node`, sorted by neighbour id.
    pub fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[node]..self.offsets[node + 1];
        self.neighbors[range.clone()]
            .iter()
            .zip(&self.weights[range])
            .map(|(&b, &w)| (b as usize, w))
    }

    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    /// `y = M x`. Each output entry is summed in neighbour order, so results
    /// do not depend on how rows are split across threads.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = vec![0.0; self.nodes()];
        self.matvec_into(x, &mut y)?;
        Ok(y)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) -> Result<()> {
        let n = self.nodes();
        for (len, what) in [(x.len(), "matvec input"), (y.len(), "matvec output")] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    found: len,
                });
            }
        }
        y.par_iter_mut()
            .with_min_len(2048)
            .enumerate()
            .for_each(|(a, out)| {
                let (lo, hi) = (self.offsets[a], self.offsets[a + 1]);
                *out = self.neighbors[lo..hi]
                    .iter()
                    .zip(&self.weights[lo..hi])
                    .map(|(&b, &w)| w * x[b as usize])
                    .sum();
            });
        Ok(())
    }

    /// Writes each undirected edge once as `a,b,weight` with `a < b`.
    pub fn write_edges_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        writeln!(out, "a,b,weight").expect("write to vec");
        for a in 0..self.nodes() {
            for (b, w) in self.neighbors(a).filter(|&(b, _)| b > a) {
                writeln!(out, "{a},{b},{w}").expect("write to vec");
            }
        }
        crate::fsutil::write_atomic(path, &out)
    }
}

/// Links every node to the nodes met within `radius` steps along its forward
/// and backward chains, symmetrizes, and collapses duplicate incidences.
pub fn build_motion_graph(chains: &ChainIndex, radius: usize, sigma_t: f64) -> Result<MotionGraph> {
    if radius == 0 {
        return Err(Error::InvalidConfig("propagation radius must be >= 1".into()));
    }
    let kernel: Vec<f64> = (0..=radius)
        .map(|dt| temporal_kernel(dt as f64, sigma_t))
        .collect::<Result<_>>()?;
    let dims = chains.dims();
    let n = dims.nodes();
    let span = 2 * radius;

    // Outgoing chain hits per node; u32::MAX marks an unused slot.
    let mut hits = vec![u32::MAX; n * span];
    hits.par_chunks_mut(span).enumerate().for_each(|(a, slots)| {
        let walk = chains.walk_fwd(a, radius).chain(chains.walk_bwd(a, radius));
        for (slot, b) in slots.iter_mut().zip(walk) {
            *slot = b as u32;
        }
    });

    let mut counts = vec![0usize; n + 1];
    for (a, slots) in hits.chunks(span).enumerate() {
        for &b in slots.iter().take_while(|&&b| b != u32::MAX) {
            counts[a] += 1;
            counts[b as usize] += 1;
        }
    }
    let mut offsets = vec![0usize; n + 1];
    for a in 0..n {
        offsets[a + 1] = offsets[a] + counts[a];
    }
    let mut fill = offsets[..n].to_vec();
    let mut raw = vec![0u32; offsets[n]];
    for (a, slots) in hits.chunks(span).enumerate() {
        for &b in slots.iter().take_while(|&&b| b != u32::MAX) {
            raw[fill[a]] = b;
            fill[a] += 1;
            raw[fill[b as usize]] = a as u32;
            fill[b as usize] += 1;
        }
    }
    drop(hits);

    // Sort and dedupe each row, then compact.
    let mut rows: Vec<&mut [u32]> = Vec::with_capacity(n);
    let mut rest = raw.as_mut_slice();
    for a in 0..n {
        let (row, tail) = rest.split_at_mut(counts[a]);
        rows.push(row);
        rest = tail;
    }
    let kept: Vec<usize> = rows
        .par_iter_mut()
        .map(|row| {
            row.sort_unstable();
            let mut k = 0;
            for i in 0..row.len() {
                if i == 0 || row[i] != row[k - 1] {
                    row[k] = row[i];
                    k += 1;
                }
            }
            k
        })
        .collect();

    let total: usize = kept.iter().sum();
    let mut new_offsets = Vec::with_capacity(n + 1);
    let mut neighbors = Vec::with_capacity(total);
    let mut weights = Vec::with_capacity(total);
    new_offsets.push(0);
    for (a, (row, &k)) in rows.iter().zip(&kept).enumerate() {
        let ta = dims.frame_of(a);
        for &b in &row[..k] {
            let dt = ta.abs_diff(dims.frame_of(b as usize));
            debug_assert!(dt >= 1 && dt <= radius);
            neighbors.push(b);
            weights.push(kernel[dt]);
        }
        new_offsets.push(neighbors.len());
    }

    Ok(MotionGraph {
        dims,
        radius,
        sigma_t,
        offsets: new_offsets,
        neighbors,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_io::{FlowField, FlowPlane};

    fn zero_graph(frames: usize, h: usize, w: usize, p: usize) -> MotionGraph {
        let flow = FlowField::zeros(VideoDims::new(frames, h, w)).unwrap();
        build_motion_graph(&build_chains(&flow), p, 2.0).unwrap()
    }

    #[test]
    fn zero_flow_gives_identity_chains() {
        let flow = FlowField::zeros(VideoDims::new(2, 1, 1)).unwrap();
        let chains = build_chains(&flow);
        assert_eq!(chains.fwd(0), Some(1));
        assert_eq!(chains.bwd(1), Some(0));
        assert_eq!(chains.fwd(1), None);
        assert_eq!(chains.bwd(0), None);
    }

    #[test]
    fn unit_shift_and_border() {
        let dims = VideoDims::new(2, 1, 2);
        let mut f = FlowPlane::zeros(1, 2);
        f.set(0, 0, (1.0, 0.0));
        f.set(0, 1, (1.0, 0.0));
        let flow = FlowField::new(dims, vec![f], vec![FlowPlane::zeros(1, 2)]).unwrap();
        let chains = build_chains(&flow);
        assert_eq!(chains.fwd(dims.node(0, 0, 0)), Some(dims.node(1, 0, 1)));
        assert_eq!(chains.fwd(dims.node(0, 0, 1)), None);
    }

    #[test]
    fn rounding_ties_away_from_zero() {
        let dims = VideoDims::new(2, 1, 4);
        let mut f = FlowPlane::zeros(1, 4);
        f.set(0, 1, (0.5, 0.0));
        f.set(0, 2, (-0.5, 0.0));
        f.set(0, 3, (-0.49, 0.0));
        let flow = FlowField::new(dims, vec![f], vec![FlowPlane::zeros(1, 4)]).unwrap();
        let chains = build_chains(&flow);
        assert_eq!(chains.fwd(1), Some(dims.node(1, 0, 2)));
        assert_eq!(chains.fwd(2), Some(dims.node(1, 0, 2)));
        assert_eq!(chains.fwd(3), Some(dims.node(1, 0, 3)));
    }

    #[test]
    fn kernel_values() {
        assert_eq!(temporal_kernel(0.0, 1.3).unwrap(), 1.0);
        assert!((temporal_kernel(2.0, 2.0).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((temporal_kernel(2.0, 2.0).unwrap() - 0.60653).abs() < 1e-5);
        for sigma in [0.1, 1.0, 2.0, 10.0] {
            assert!(temporal_kernel(1.0, sigma).unwrap() > temporal_kernel(2.0, sigma).unwrap());
        }
        assert!(matches!(
            temporal_kernel(1.0, 0.0),
            Err(Error::NonPositiveBandwidth(_))
        ));
    }

    #[test]
    fn zero_flow_lattice_links_column_mates() {
        let g = zero_graph(3, 2, 2, 2);
        let dims = g.dims();
        let k1 = temporal_kernel(1.0, 2.0).unwrap();
        let k2 = temporal_kernel(2.0, 2.0).unwrap();
        let a = dims.node(0, 1, 0);
        let nbrs: Vec<_> = g.neighbors(a).collect();
        assert_eq!(nbrs, vec![(dims.node(1, 1, 0), k1), (dims.node(2, 1, 0), k2)]);
    }

    #[test]
    fn radius_bounds_temporal_distance() {
        let g = zero_graph(6, 2, 3, 1);
        let dims = g.dims();
        for a in 0..g.nodes() {
            assert!(g.degree(a) <= 2);
            for (b, _) in g.neighbors(a) {
                assert_eq!(dims.frame_of(a).abs_diff(dims.frame_of(b)), 1);
            }
        }
    }

    #[test]
    fn one_hot_probe_returns_weight_column() {
        let g = zero_graph(4, 2, 2, 3);
        let a = 5;
        let mut x = vec![0.0; g.nodes()];
        x[a] = 1.0;
        let y = g.matvec(&x).unwrap();
        let mut expected = vec![0.0; g.nodes()];
        for (b, w) in g.neighbors(a) {
            expected[b] = w;
        }
        assert_eq!(y, expected);
        assert_eq!(g.matvec(&vec![0.0; g.nodes()]).unwrap(), vec![0.0; g.nodes()]);
    }

    #[test]
    fn matvec_rejects_wrong_length() {
        let g = zero_graph(2, 2, 2, 1);
        assert!(matches!(
            g.matvec(&[1.0; 3]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn converging_chains_are_deduplicated() {
        // both pixels of frame 0 land on pixel 0 of frame 1
        let dims = VideoDims::new(2, 1, 2);
        let mut f = FlowPlane::zeros(1, 2);
        f.set(0, 1, (-1.0, 0.0));
        let flow = FlowField::new(dims, vec![f], vec![FlowPlane::zeros(1, 2)]).unwrap();
        let g = build_motion_graph(&build_chains(&flow), 3, 2.0).unwrap();
        // (0,0)<->(1,0) appears via fwd of node 0 and bwd of node 2
        let row: Vec<_> = g.neighbors(dims.node(1, 0, 0)).map(|(b, _)| b).collect();
        assert_eq!(row, vec![0, 1]);
        assert_eq!(g.num_edges(), 3);
    }

    #[test]
    fn edges_csv_lists_each_edge_once() {
        let g = zero_graph(3, 1, 2, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("edges.csv");
        g.write_edges_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + g.num_edges());
        assert!(text.starts_with("a,b,weight\n0,2,"));
    }
}
