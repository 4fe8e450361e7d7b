//! Power iteration on `A = P M P` without forming it: propagate through `M`,
//! project onto the feature column space, normalize.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{FeatureConfig, FeatureMatrix};
use crate::motion_graph::MotionGraph;
use crate::projection::{project, project_into, RidgeSolveCache};
use crate::tensor::read_tensor;
use crate::video::VideoDims;

/// Norm below which `P M x` counts as collapsed.
pub const COLLAPSE_NORM: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    /// iid `U(0, 1)` per node.
    Uniform,
    Constant,
    /// Centred 2D Gaussian per frame, std as a fraction of `min(h, w)`.
    GaussianPrior { sigma_frac: f64 },
    /// Any `.stgt` tensor holding exactly `n` values.
    FromFile(PathBuf),
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitMode::Uniform => write!(f, "uniform"),
            InitMode::Constant => write!(f, "constant"),
            InitMode::GaussianPrior { sigma_frac } => write!(f, "gaussian:{sigma_frac}"),
            InitMode::FromFile(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(InitMode::Uniform),
            "constant" => Ok(InitMode::Constant),
            "gaussian" => Ok(InitMode::GaussianPrior { sigma_frac: 0.25 }),
            _ => {
                if let Some(frac) = s.strip_prefix("gaussian:") {
                    let sigma_frac: f64 = frac
                        .parse()
                        .map_err(|_| Error::InvalidConfig(format!("bad gaussian width {frac:?}")))?;
                    if !(sigma_frac > 0.0) {
                        return Err(Error::InvalidConfig("gaussian width must be positive".into()));
                    }
                    Ok(InitMode::GaussianPrior { sigma_frac })
                } else if let Some(path) = s.strip_prefix("file:") {
                    Ok(InitMode::FromFile(PathBuf::from(path)))
                } else {
                    Err(Error::InvalidConfig(format!(
                        "unknown init mode {s:?} (uniform, constant, gaussian[:w], file:PATH)"
                    )))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Propagation radius `p` in frames.
    pub radius: usize,
    /// Feature half-window `q`; chains contribute `2q + 1` pixels.
    pub half_window: usize,
    pub sigma_t: f64,
    /// Ridge strength; `None` selects `1e-4 * trace(F^T F) / d`.
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
    pub init: InitMode,
    pub seed: u64,
    pub standardize: bool,
    pub bias: bool,
    pub prune_tol: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            radius: 5,
            half_window: 1,
            sigma_t: 2.0,
            lambda: None,
            tol: 1e-6,
            max_iters: 20,
            init: InitMode::Uniform,
            seed: 42,
            standardize: true,
            bias: true,
            prune_tol: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if self.max_iters < 1 {
            return bad("max_iters must be >= 1".into());
        }
        if self.radius < 1 {
            return bad("propagation radius p must be >= 1".into());
        }
        if !(self.sigma_t > 0.0) {
            return Err(Error::NonPositiveBandwidth(self.sigma_t));
        }
        if let Some(l) = self.lambda {
            if !(l >= 0.0) || !l.is_finite() {
                return bad(format!("lambda must be finite and >= 0, got {l}"));
            }
        }
        Ok(())
    }

    pub fn feature_config(&self) -> FeatureConfig {
        FeatureConfig {
            half_window: self.half_window,
            standardize: self.standardize,
            bias: self.bias,
            prune_tol: self.prune_tol,
        }
    }

    pub fn build_cache(&self, f: &FeatureMatrix) -> Result<RidgeSolveCache> {
        match self.lambda {
            Some(l) => RidgeSolveCache::build(f, l),
            None => RidgeSolveCache::build_auto(f),
        }
    }
}

/// Unit-norm node labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector(Vec<f64>);

impl LabelVector {
    /// Normalizes `v` to unit L2 norm.
    pub fn normalized(mut v: Vec<f64>) -> Result<Self> {
        let norm = l2(&v);
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                what: "label vector",
            });
        }
        if norm < COLLAPSE_NORM {
            return Err(Error::CollapsedSolution { iteration: 0, norm });
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(Self(v))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        l2(&self.0)
    }

    pub fn cosine(&self, other: &LabelVector) -> f64 {
        dot(&self.0, &other.0) / (self.norm() * other.norm())
    }

    /// Flips the sign so the entries sum to a nonnegative value.
    pub fn sign_fixed(mut self) -> (Self, bool) {
        let flip = self.0.iter().sum::<f64>() < 0.0;
        if flip {
            self.0.iter_mut().for_each(|v| *v = -*v);
        }
        (self, flip)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn init_labels(dims: VideoDims, mode: &InitMode, seed: u64) -> Result<LabelVector> {
    let n = dims.nodes();
    if n == 0 {
        return Err(Error::InvalidConfig("cannot initialize an empty label vector".into()));
    }
    let values = match mode {
        InitMode::Uniform => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.gen::<f64>()).collect()
        }
        InitMode::Constant => vec![1.0; n],
        InitMode::GaussianPrior { sigma_frac } => {
            let sigma = sigma_frac * dims.height.min(dims.width) as f64;
            let cy = (dims.height as f64 - 1.0) / 2.0;
            let cx = (dims.width as f64 - 1.0) / 2.0;
            let mut plane = Vec::with_capacity(dims.frame_len());
            for r in 0..dims.height {
                for c in 0..dims.width {
                    let d2 = (r as f64 - cy).powi(2) + (c as f64 - cx).powi(2);
                    plane.push((-d2 / (2.0 * sigma * sigma)).exp());
                }
            }
            plane.repeat(dims.frames)
        }
        InitMode::FromFile(path) => {
            let bad = |reason: String| Error::BadInitFile {
                path: path.clone(),
                reason,
            };
            let t = read_tensor(path).map_err(|e| bad(e.to_string()))?;
            if t.data().len() != n {
                return Err(bad(format!("holds {} values, need {n}", t.data().len())));
            }
            let v: Vec<f64> = t.data().iter().map(|&x| x as f64).collect();
            if v.iter().any(|x| !x.is_finite()) {
                return Err(bad("non-finite values".into()));
            }
            return LabelVector::normalized(v).map_err(|e| bad(e.to_string()));
        }
    };
    LabelVector::normalized(values)
}

/// One propagation, projection and normalization step: `normalize(P M x)`.
pub fn iterate_once(
    g: &MotionGraph,
    f: &FeatureMatrix,
    cache: &RidgeSolveCache,
    x: &LabelVector,
) -> Result<LabelVector> {
    let mut buf = Workspace::new(g.nodes());
    step(g, f, cache, x.values(), &mut buf, 0)
}

struct Workspace {
    propagated: Vec<f64>,
    projected: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            propagated: vec![0.0; n],
            projected: vec![0.0; n],
        }
    }
}

fn step(
    g: &MotionGraph,
    f: &FeatureMatrix,
    cache: &RidgeSolveCache,
    x: &[f64],
    buf: &mut Workspace,
    iteration: usize,
) -> Result<LabelVector> {
    g.matvec_into(x, &mut buf.propagated)?;
    project_into(cache, f, &buf.propagated, &mut buf.projected)?;
    let norm = l2(&buf.projected);
    if !(norm >= COLLAPSE_NORM) {
        if !norm.is_finite() {
            return Err(Error::NonFinite {
                what: "propagated labels",
            });
        }
        return Err(Error::CollapsedSolution { iteration, norm });
    }
    Ok(LabelVector(buf.projected.iter().map(|v| v / norm).collect()))
}

/// `x^T P M P x` for the current iterate.
pub fn rayleigh(g: &MotionGraph, f: &FeatureMatrix, cache: &RidgeSolveCache, x: &[f64]) -> Result<f64> {
    let px = project(cache, f, x)?;
    let mpx = g.matvec(&px)?;
    Ok(dot(&px, &mpx) / dot(x, x))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub rayleigh: f64,
    pub step_norm: f64,
    /// Wall time of the propagate/project/normalize step.
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
    pub sign_flipped: bool,
    /// Fraction of strictly negative entries in the final vector.
    pub negative_fraction: f64,
}

impl SolveDiagnostics {
    pub fn iterations_used(&self) -> usize {
        self.iterations.len()
    }

    pub fn to_csv(&self) -> String {
        let mut out = Vec::new();
        writeln!(out, "iter,rayleigh,step_norm,ms").expect("write to vec");
        for r in &self.iterations {
            writeln!(out, "{},{:.12e},{:.6e},{:.4}", r.iter, r.rayleigh, r.step_norm, r.ms)
                .expect("write to vec");
        }
        String::from_utf8(out).expect("ascii csv")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::fsutil::write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }
}

/// Initializes per `config.init` and iterates to convergence.
pub fn solve(
    g: &MotionGraph,
    f: &FeatureMatrix,
    cache: &RidgeSolveCache,
    config: &SolverConfig,
) -> Result<(LabelVector, SolveDiagnostics)> {
    config.validate()?;
    let x0 = init_labels(g.dims(), &config.init, config.seed)?;
    solve_from(g, f, cache, config, x0)
}

/// Iterates from `x0` until the step norm drops below `config.tol` or
/// `config.max_iters` steps have run, then applies the sign convention.
pub fn solve_from(
    g: &MotionGraph,
    f: &FeatureMatrix,
    cache: &RidgeSolveCache,
    config: &SolverConfig,
    x0: LabelVector,
) -> Result<(LabelVector, SolveDiagnostics)> {
    config.validate()?;
    if x0.len() != g.nodes() || f.rows() != g.nodes() {
        return Err(Error::DimensionMismatch {
            what: "solver inputs",
            expected: g.nodes(),
            found: if x0.len() != g.nodes() { x0.len() } else { f.rows() },
        });
    }
    let mut buf = Workspace::new(g.nodes());
    let mut x = x0;
    let mut records = Vec::with_capacity(config.max_iters);
    let mut converged = false;
    for iter in 1..=config.max_iters {
        let start = Instant::now();
        let next = step(g, f, cache, x.values(), &mut buf, iter)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let step_norm = l2(&next
            .values()
            .iter()
            .zip(x.values())
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>());
        let rq = rayleigh(g, f, cache, next.values())?;
        records.push(IterationRecord {
            iter,
            rayleigh: rq,
            step_norm,
            ms,
        });
        x = next;
        if step_norm < config.tol {
            converged = true;
            break;
        }
    }
    let (x, sign_flipped) = x.sign_fixed();
    let negative_fraction =
        x.values().iter().filter(|&&v| v < 0.0).count() as f64 / x.len() as f64;
    Ok((
        x,
        SolveDiagnostics {
            iterations: records,
            converged,
            sign_flipped,
            negative_fraction,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::build_features;
    use crate::features::FeatureMapSet;
    use crate::flow_io::{synth_scene, ObjectShape, SynthSceneSpec};
    use crate::motion_graph::{build_chains, build_motion_graph};

    #[test]
    fn constant_init_is_uniform_unit_vector() {
        let x = init_labels(VideoDims::new(2, 1, 2), &InitMode::Constant, 0).unwrap();
        assert_eq!(x.values(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn inits_are_unit_norm_and_seeded() {
        let dims = VideoDims::new(3, 5, 7);
        for mode in [
            InitMode::Uniform,
            InitMode::Constant,
            InitMode::GaussianPrior { sigma_frac: 0.2 },
        ] {
            let x = init_labels(dims, &mode, 9).unwrap();
            assert!((x.norm() - 1.0).abs() < 1e-12, "{mode}");
        }
        let a = init_labels(dims, &InitMode::Uniform, 3).unwrap();
        assert_eq!(a, init_labels(dims, &InitMode::Uniform, 3).unwrap());
        assert_ne!(a, init_labels(dims, &InitMode::Uniform, 4).unwrap());
    }

    #[test]
    fn init_from_file() {
        let dims = VideoDims::new(2, 1, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x0.stgt");
        let t = crate::tensor::Tensor::new(vec![2, 1, 2], vec![3.0, 0.0, 0.0, 4.0]).unwrap();
        crate::tensor::write_tensor(&path, &t).unwrap();
        let x = init_labels(dims, &InitMode::FromFile(path.clone()), 0).unwrap();
        assert_eq!(x.values(), &[0.6, 0.0, 0.0, 0.8]);
        let wrong = init_labels(VideoDims::new(2, 2, 2), &InitMode::FromFile(path), 0);
        assert!(matches!(wrong, Err(Error::BadInitFile { .. })));
        let missing = init_labels(dims, &InitMode::FromFile(dir.path().join("nope")), 0);
        assert!(matches!(missing, Err(Error::BadInitFile { .. })));
    }

    #[test]
    fn init_mode_parsing() {
        assert_eq!("uniform".parse::<InitMode>().unwrap(), InitMode::Uniform);
        assert_eq!(
            "gaussian:0.1".parse::<InitMode>().unwrap(),
            InitMode::GaussianPrior { sigma_frac: 0.1 }
        );
        assert_eq!(
            "file:/tmp/a.stgt".parse::<InitMode>().unwrap(),
            InitMode::FromFile("/tmp/a.stgt".into())
        );
        assert!("random".parse::<InitMode>().is_err());
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig {
            max_iters: 0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        assert!(SolverConfig {
            tol: 0.0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    fn small_problem(lambda: Option<f64>) -> (MotionGraph, FeatureMatrix, RidgeSolveCache) {
        let spec = SynthSceneSpec {
            frames: 4,
            height: 10,
            width: 10,
            shape: ObjectShape::Rect {
                height: 4.0,
                width: 4.0,
            },
            position: (5.0, 5.0),
            object_velocity: (0.0, 1.0),
            background_velocity: (4.0, 0.0),
            noise: 0.0,
            seed: 2,
        };
        let scene = synth_scene(&spec).unwrap();
        let chains = build_chains(&scene.flow);
        let g = build_motion_graph(&chains, 3, 2.0).unwrap();
        let cfg = SolverConfig {
            lambda,
            ..Default::default()
        };
        let f = build_features(&chains, &FeatureMapSet::from_flow(&scene.flow), &cfg.feature_config()).unwrap();
        let cache = cfg.build_cache(&f).unwrap();
        (g, f, cache)
    }

    #[test]
    fn bias_only_features_give_constant_output() {
        let (g, _, _) = small_problem(None);
        let f = FeatureMatrix::new(g.nodes(), 0, vec![]).unwrap().with_bias();
        let cache = RidgeSolveCache::build(&f, 0.0).unwrap();
        let x = init_labels(g.dims(), &InitMode::Uniform, 1).unwrap();
        let y = iterate_once(&g, &f, &cache, &x).unwrap();
        let first = y.values()[0];
        assert!(y.values().iter().all(|v| (v - first).abs() < 1e-14));
        assert!((y.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn converged_vector_is_a_fixed_point() {
        let (g, f, cache) = small_problem(None);
        let cfg = SolverConfig {
            max_iters: 500,
            tol: 1e-10,
            ..Default::default()
        };
        let (x, diag) = solve(&g, &f, &cache, &cfg).unwrap();
        assert!(diag.converged);
        let y = iterate_once(&g, &f, &cache, &x).unwrap();
        assert!(y.cosine(&x).abs() > 1.0 - 1e-12);
        assert!(x.values().iter().sum::<f64>() >= 0.0);
    }

    #[test]
    fn diagnostics_csv_shape() {
        let (g, f, cache) = small_problem(None);
        let cfg = SolverConfig {
            max_iters: 4,
            tol: 1e-300,
            ..Default::default()
        };
        let (_, diag) = solve(&g, &f, &cache, &cfg).unwrap();
        assert_eq!(diag.iterations_used(), 4);
        let csv = diag.to_csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("iter,rayleigh,step_norm,ms\n1,"));
    }

    #[test]
    fn collapse_is_reported() {
        let (g, f, cache) = small_problem(None);
        let zero = LabelVector(vec![0.0; g.nodes()]);
        assert!(matches!(
            iterate_once(&g, &f, &cache, &zero),
            Err(Error::CollapsedSolution { .. })
        ));
        assert!(matches!(
            LabelVector::normalized(vec![0.0; 3]),
            Err(Error::CollapsedSolution { .. })
        ));
    }
}
