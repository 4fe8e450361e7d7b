use std::path::PathBuf;
use std::time::Duration;

use anyhow::{anyhow, bail, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use stgraph_core::{InitMode, SolverConfig};

use crate::config::ConfigFile;

#[derive(Debug, Parser)]
#[command(name = "stgraph", version, about = "Space-time graph segmentation of videos from optical flow")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment one video and write masks, label planes and diagnostics.
    Segment(RunArgs),
    /// Run the iterative graph/network loop on one video.
    Ike(RunArgs),
    /// Compare the implicit solver with the explicit dense oracle.
    Oracle(OracleArgs),
    /// Score a corpus for several feature half-windows q.
    SweepQ(SweepArgs),
    /// Generate a synthetic corpus with frames, flow and ground truth.
    Synth(SynthArgs),
    /// Score predicted masks against ground truth.
    Metrics(MetricsArgs),
}

/// Flags shared by every command that runs the solver. Each may also come
/// from `--config`; flags take precedence.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Directory of `*.ppm` frames.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// Directory of `forward_%04d.flo` / `backward_%04d.flo` files.
    #[arg(long)]
    pub flow: Option<PathBuf>,
    /// Output directory (the workspace for `ike`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory of ground-truth `*.pgm` masks; enables metrics.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Propagation radius in frames.
    #[arg(long)]
    pub p: Option<usize>,
    /// Feature half-window along the chains.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub sigma_t: Option<f64>,
    /// Ridge strength, or `auto`.
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// `uniform`, `constant`, `gaussian[:sigma_frac]` or `file:PATH`.
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Mask threshold in [0, 1].
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub cycles: Option<usize>,
    /// Shell command template with `{frames_dir}`, `{labels_dir}` and `{out_dir}`.
    #[arg(long)]
    pub network_cmd: Option<String>,
    /// Seconds before a network invocation is killed.
    #[arg(long)]
    pub network_timeout: Option<u64>,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Write per-iteration diagnostics to `diagnostics.csv`.
    #[arg(long)]
    pub dump_diagnostics: bool,
    /// `key = value` file supplying defaults for the flags above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Number of eigenvalues to report.
    #[arg(long, default_value_t = stgraph_core::oracle::DEFAULT_SPECTRUM_K)]
    pub k: usize,
    /// Relative Frobenius size of a random symmetric perturbation of A.
    #[arg(long)]
    pub perturb: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Corpus root; every subdirectory with `flow/` and `gt/` is one video.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated half-windows to evaluate.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
    pub q_list: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scale {
    /// Ten 48x64 frames.
    Desk,
    /// Five 16x16 frames.
    Oracle,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub videos: usize,
    #[arg(long, value_enum, default_value_t = Scale::Desk)]
    pub scale: Scale,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Predicted masks (`mask_*.pgm`, optionally with `soft_*.pgm`).
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = stgraph_core::masks::DEFAULT_THRESHOLD)]
    pub tau: f64,
    /// Also write per-frame scores to this CSV file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub frames: Option<PathBuf>,
    pub flow: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub gt: Option<PathBuf>,
    pub tau: f64,
    pub cycles: usize,
    pub network_cmd: Option<String>,
    pub network_timeout: Duration,
    pub threads: Option<usize>,
    pub dump_diagnostics: bool,
}

pub const DEFAULT_NETWORK_TIMEOUT_SECS: u64 = 3600;

impl RunArgs {
    /// Merges flags over the config file, applies `base` for anything left
    /// unset and validates the result.
    pub fn resolve(&self, base: SolverConfig) -> Result<RunConfig> {
        let file = match &self.config {
            Some(path) => ConfigFile::load(path)?,
            None => ConfigFile::default(),
        };
        let path = |flag: &Option<PathBuf>, key: &str| flag.clone().or_else(|| file.raw(key).map(PathBuf::from));

        let mut solver = base;
        if let Some(p) = pick(self.p, &file, "p")? {
            solver.radius = p;
        }
        if let Some(q) = pick(self.q, &file, "q")? {
            solver.half_window = q;
        }
        if let Some(s) = pick(self.sigma_t, &file, "sigma-t")? {
            solver.sigma_t = s;
        }
        if let Some(l) = self.lambda.clone().or_else(|| file.raw("lambda").map(String::from)) {
            solver.lambda = parse_lambda(&l)?;
        }
        if let Some(t) = pick(self.tol, &file, "tol")? {
            solver.tol = t;
        }
        if let Some(m) = pick(self.max_iters, &file, "max-iters")? {
            solver.max_iters = m;
        }
        if let Some(i) = self.init.clone().or_else(|| file.raw("init").map(String::from)) {
            solver.init = i.parse::<InitMode>().map_err(|e| anyhow!("--init: {e}"))?;
        }
        if let Some(s) = pick(self.seed, &file, "seed")? {
            solver.seed = s;
        }
        solver.validate().map_err(|e| anyhow!("{e}"))?;

        let tau = pick(self.tau, &file, "tau")?;
        let tau = tau.unwrap_or(stgraph_core::masks::DEFAULT_THRESHOLD);
        if !(0.0..=1.0).contains(&tau) {
            bail!("--tau must lie in [0, 1], got {tau}");
        }
        let cycles = pick(self.cycles, &file, "cycles")?;
        let cycles = cycles.unwrap_or(3);
        if cycles < 1 {
            bail!("--cycles must be >= 1");
        }
        let threads = pick(self.threads, &file, "threads")?;
        if threads == Some(0) {
            bail!("--threads must be >= 1");
        }
        let timeout = pick(self.network_timeout, &file, "network-timeout")?.unwrap_or(DEFAULT_NETWORK_TIMEOUT_SECS);
        let dump_diagnostics =
            self.dump_diagnostics || file.get::<bool>("dump-diagnostics")?.unwrap_or(false);

        Ok(RunConfig {
            solver,
            frames: path(&self.frames, "frames"),
            flow: path(&self.flow, "flow"),
            out: path(&self.out, "out"),
            gt: path(&self.gt, "gt"),
            tau,
            cycles,
            network_cmd: self.network_cmd.clone().or_else(|| file.raw("network-cmd").map(String::from)),
            network_timeout: Duration::from_secs(timeout),
            threads,
            dump_diagnostics,
        })
    }
}

fn pick<T>(flag: Option<T>, file: &ConfigFile, key: &str) -> Result<Option<T>>
where
    T: std::str::FromStr,
    T::Err: std::fmt::Display,
{
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

fn parse_lambda(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    let v: f64 = s.parse().map_err(|_| anyhow!("--lambda expects a number or `auto`, got `{s}`"))?;
    Ok(Some(v))
}

impl RunConfig {
    /// The directory named by `flag`, which must exist.
    pub fn require_dir(value: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
        let dir = value.clone().ok_or_else(|| anyhow!("missing required {flag} <DIR>"))?;
        if !dir.is_dir() {
            bail!("{flag} {} is not a directory", dir.display());
        }
        Ok(dir)
    }

    pub fn optional_dir(value: &Option<PathBuf>, flag: &str) -> Result<Option<PathBuf>> {
        value.as_ref().map(|_| Self::require_dir(value, flag)).transpose()
    }

    pub fn require_out(&self) -> Result<PathBuf> {
        self.out.clone().ok_or_else(|| anyhow!("missing required --out <DIR>"))
    }
}
