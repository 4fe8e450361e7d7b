//! Outer refinement cycles: solve the graph, hand pseudo-labels to an
//! external network process, and fold its predictions back in as features.
//!
//! Workspace layout for one video:
//!
//! ```text
//! <workspace>/frames/frame_%04d.ppm
//! <workspace>/cycle_<c>/x_%04d.stgt     graph soft masks, shape (h, w)
//! <workspace>/cycle_<c>/s_%04d.stgt     network predictions, shape (h, w)
//! <workspace>/cycle_<c>/masks/*.pgm
//! <workspace>/cycle_<c>/metrics.csv     only with ground truth
//! <workspace>/cycle_<c>/graph.done, network.done
//! ```
//!
//! The `.done` markers make an interrupted run resumable: completed stages
//! are reloaded from disk instead of recomputed.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use log::{info, warn};

use crate::error::{Error, Result};
use crate::features::FeatureMapSet;
use crate::flow_io::{save_frames_dir, FlowField};
use crate::fsutil::{create_dir_all, write_atomic};
use crate::masks::{evaluate, MetricsReport, SegmentationMasks, DEFAULT_THRESHOLD};
use crate::pipeline::SpaceTimeGraph;
use crate::solver::{LabelVector, SolveDiagnostics, SolverConfig};
use crate::tensor::{read_tensor, write_tensor, Tensor};
use crate::video::{GroundTruthMasks, VideoDims, VideoVolume};

const GRAPH_DONE: &str = "graph.done";
const NETWORK_DONE: &str = "network.done";

/// An external command honouring the directory protocol. Placeholders
/// `{frames_dir}`, `{labels_dir}` and `{out_dir}` are replaced with
/// shell-quoted paths and the result runs under `sh -c`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInvocation {
    pub command: String,
    pub timeout: Duration,
}

impl NetworkInvocation {
    pub fn new(command: impl Into<String>, timeout: Duration) -> Result<Self> {
        let command = command.into();
        if command.trim().is_empty() {
            return Err(Error::InvalidConfig("network command is empty".into()));
        }
        if timeout.is_zero() {
            return Err(Error::InvalidConfig("network timeout must be positive".into()));
        }
        Ok(Self { command, timeout })
    }

    pub fn render(&self, frames_dir: &Path, labels_dir: &Path, out_dir: &Path) -> String {
        self.command
            .replace("{frames_dir}", &shell_quote(frames_dir))
            .replace("{labels_dir}", &shell_quote(labels_dir))
            .replace("{out_dir}", &shell_quote(out_dir))
    }

    /// Runs to completion, killing the process on timeout. Output goes to
    /// `<out_dir>/network.log`.
    pub fn run(&self, frames_dir: &Path, labels_dir: &Path, out_dir: &Path) -> Result<()> {
        let rendered = self.render(frames_dir, labels_dir, out_dir);
        let log_path = out_dir.join("network.log");
        let log = File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
        let log_err = log.try_clone().map_err(|e| Error::io(&log_path, e))?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&rendered)
            .stdin(Stdio::null())
            .stdout(Stdio::from(log))
            .stderr(Stdio::from(log_err))
            .spawn()
            .map_err(|e| Error::NetworkFailed(format!("cannot start `{rendered}`: {e}")))?;
        let start = Instant::now();
        loop {
            match child.try_wait() {
                Ok(Some(status)) if status.success() => return Ok(()),
                Ok(Some(status)) => {
                    return Err(Error::NetworkFailed(format!(
                        "`{rendered}` exited with {status}; see {}",
                        log_path.display()
                    )))
                }
                Ok(None) if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Error::NetworkFailed(format!(
                        "`{rendered}` timed out after {:.1} s",
                        self.timeout.as_secs_f64()
                    )));
                }
                Ok(None) => thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(Error::NetworkFailed(format!("waiting on `{rendered}`: {e}"))),
            }
        }
    }
}

fn shell_quote(path: &Path) -> String {
    format!("'{}'", path.display().to_string().replace('\'', r"'\''"))
}

pub fn cycle_dir(workspace: &Path, cycle: usize) -> PathBuf {
    workspace.join(format!("cycle_{cycle}"))
}

/// Writes `x_%04d.stgt` soft planes and PGM previews under `dir`.
pub fn export_pseudo_labels(masks: &SegmentationMasks, dir: &Path) -> Result<()> {
    create_dir_all(dir)?;
    let dims = masks.dims();
    for t in 0..dims.frames {
        let plane = Tensor::new(vec![dims.height, dims.width], masks.soft_frame(t).to_vec())?;
        write_tensor(dir.join(format!("x_{t:04}.stgt")), &plane)?;
    }
    masks.write_pgm_dir(dir.join("masks"))
}

fn read_planes(dir: &Path, prefix: &str, dims: VideoDims) -> Result<Vec<f32>> {
    let mut out = Vec::with_capacity(dims.nodes());
    for t in 0..dims.frames {
        let path = dir.join(format!("{prefix}_{t:04}.stgt"));
        if !path.exists() {
            return Err(Error::NetworkFailed(format!("missing output {}", path.display())));
        }
        let tensor = read_tensor(&path)?;
        let expected = vec![dims.height, dims.width];
        if tensor.dims() != expected.as_slice() {
            return Err(Error::ShapeMismatch {
                frame: t,
                expected,
                found: tensor.dims().to_vec(),
            });
        }
        if tensor.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NetworkFailed(format!("non-finite values in {}", path.display())));
        }
        out.extend_from_slice(tensor.data());
    }
    Ok(out)
}

/// Reads `s_%04d.stgt` predictions written by the network.
pub fn import_predictions(dir: &Path, dims: VideoDims) -> Result<Vec<f32>> {
    read_planes(dir, "s", dims)
}

fn read_pseudo_labels(dir: &Path, dims: VideoDims) -> Result<Vec<f32>> {
    read_planes(dir, "x", dims)
}

#[derive(Debug, Clone)]
pub struct IkeConfig {
    pub solver: SolverConfig,
    pub cycles: usize,
    pub threshold: f64,
    pub network: Option<NetworkInvocation>,
    /// Per-video workspace; `None` keeps everything in memory, which is only
    /// allowed without a network.
    pub workspace: Option<PathBuf>,
}

impl Default for IkeConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            cycles: 3,
            threshold: DEFAULT_THRESHOLD,
            network: None,
            workspace: None,
        }
    }
}

impl IkeConfig {
    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        if self.cycles < 1 {
            return Err(Error::InvalidConfig("cycles must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::InvalidConfig(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.network.is_some() && self.workspace.is_none() {
            return Err(Error::InvalidConfig("a network run needs a workspace directory".into()));
        }
        Ok(())
    }
}

/// Output of one cycle: the graph result `x#c` and, when a network ran
/// after it, the predictions `s#c`.
#[derive(Debug, Clone)]
pub struct CycleState {
    pub cycle: usize,
    pub masks: SegmentationMasks,
    /// `None` when the cycle was reloaded from a workspace.
    pub labels: Option<LabelVector>,
    pub diagnostics: Option<SolveDiagnostics>,
    pub predictions: Option<Vec<f32>>,
    pub metrics: Option<MetricsReport>,
    pub feature_dim: usize,
}

/// Flow alone for the first cycle; flow, `x#(c-1)` and `s#(c-1)` after.
pub fn cycle_feature_maps(flow: &FlowField, previous: Option<&CycleState>) -> Result<FeatureMapSet> {
    let mut maps = FeatureMapSet::from_flow(flow);
    if let Some(prev) = previous {
        let widen = |v: &[f32]| v.iter().map(|&x| x as f64).collect::<Vec<_>>();
        maps.push("graph", 1, widen(prev.masks.soft()))?;
        if let Some(s) = &prev.predictions {
            maps.push("network", 1, widen(s))?;
        }
    }
    Ok(maps)
}

/// Solves cycle `cycle` and, when a workspace is configured, checkpoints it.
/// A workspace holding `graph.done` for this cycle is reloaded instead.
pub fn run_cycle(
    graph: &SpaceTimeGraph,
    flow: &FlowField,
    previous: Option<&CycleState>,
    cycle: usize,
    config: &IkeConfig,
    gt: Option<&GroundTruthMasks>,
) -> Result<CycleState> {
    let dims = flow.dims();
    let maps = cycle_feature_maps(flow, previous)?;
    let dir = config.workspace.as_ref().map(|w| cycle_dir(w, cycle));
    let feature_dim = (2 * config.solver.half_window + 1) * maps.channels() + usize::from(config.solver.bias);

    let (masks, labels, diagnostics) = match &dir {
        Some(d) if d.join(GRAPH_DONE).exists() => {
            info!("cycle {cycle}: reloading graph output from {}", d.display());
            let soft = read_pseudo_labels(d, dims)?;
            (SegmentationMasks::from_soft(dims, soft, config.threshold)?, None, None)
        }
        _ => {
            let solution = graph.solve(&maps, &config.solver)?;
            let masks = solution.masks(graph, config.threshold)?;
            if masks.is_constant() {
                warn!("cycle {cycle}: label vector is constant, masks carry no segmentation");
            }
            info!(
                "cycle {cycle}: d = {}, {} iterations, converged = {}",
                solution.features.cols(),
                solution.diagnostics.iterations_used(),
                solution.diagnostics.converged
            );
            (masks, Some(solution.labels), Some(solution.diagnostics))
        }
    };

    let metrics = gt.map(|g| evaluate(&masks, g)).transpose()?;
    if let Some(d) = &dir {
        if !d.join(GRAPH_DONE).exists() {
            export_pseudo_labels(&masks, d)?;
            if let Some(m) = &metrics {
                m.write_csv(d.join("metrics.csv"))?;
            }
            if let Some(diag) = &diagnostics {
                diag.write_csv(d.join("diagnostics.csv"))?;
            }
            write_atomic(&d.join(GRAPH_DONE), b"")?;
        }
    }

    Ok(CycleState {
        cycle,
        masks,
        labels,
        diagnostics,
        predictions: None,
        metrics,
        feature_dim,
    })
}

fn run_network(
    state: &mut CycleState,
    network: &NetworkInvocation,
    workspace: &Path,
    frames_dir: &Path,
) -> Result<()> {
    let dir = cycle_dir(workspace, state.cycle);
    let dims = state.masks.dims();
    if !dir.join(NETWORK_DONE).exists() {
        info!("cycle {}: invoking network", state.cycle);
        network.run(frames_dir, &dir, &dir)?;
        import_predictions(&dir, dims)?;
        write_atomic(&dir.join(NETWORK_DONE), b"")?;
    }
    state.predictions = Some(import_predictions(&dir, dims)?);
    Ok(())
}

#[derive(Debug, Clone)]
pub struct IkeOutcome {
    pub cycles: Vec<CycleState>,
}

impl IkeOutcome {
    /// Graph masks of the last cycle.
    pub fn final_masks(&self) -> &SegmentationMasks {
        &self.cycles.last().expect("at least one cycle").masks
    }

    pub fn jmeans(&self) -> Vec<Option<f64>> {
        self.cycles.iter().map(|c| c.metrics.as_ref().map(|m| m.jmean)).collect()
    }
}

/// Runs `config.cycles` cycles. The network, when configured, runs after
/// every cycle except the last; without one each cycle feeds only its graph
/// output forward.
pub fn run_ike(
    flow: &FlowField,
    video: Option<&VideoVolume>,
    gt: Option<&GroundTruthMasks>,
    config: &IkeConfig,
) -> Result<IkeOutcome> {
    config.validate()?;
    let graph = SpaceTimeGraph::build(flow, &config.solver)?;
    let frames_dir = match (&config.workspace, &config.network) {
        (Some(ws), Some(_)) => {
            let dir = ws.join("frames");
            if let Some(v) = video {
                if !dir.exists() {
                    save_frames_dir(v, &dir)?;
                }
            } else {
                create_dir_all(&dir)?;
            }
            Some(dir)
        }
        _ => None,
    };
    let mut cycles: Vec<CycleState> = Vec::with_capacity(config.cycles);
    for c in 1..=config.cycles {
        let mut state = run_cycle(&graph, flow, cycles.last(), c, config, gt)?;
        if let (Some(net), Some(ws), Some(fd)) = (&config.network, &config.workspace, &frames_dir) {
            if c < config.cycles {
                run_network(&mut state, net, ws, fd)?;
            }
        }
        cycles.push(state);
    }
    Ok(IkeOutcome { cycles })
}
