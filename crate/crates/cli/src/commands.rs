use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use log::{info, warn};
use stgraph_core::flow_io::{
    load_flow_dir, load_frames_dir, load_masks_dir, read_pgm, save_flow_dir, save_frames_dir, save_masks_dir,
    synth_corpus, synth_scene, CorpusSpec,
};
use stgraph_core::fsutil::{create_dir_all, list_with_extension, write_atomic};
use stgraph_core::ike::{export_pseudo_labels, run_ike, IkeConfig, NetworkInvocation};
use stgraph_core::oracle::{
    build_explicit, dense_power_iteration, perturbation_bound, reorder_foreground_first, rotation_angle, spectrum,
    symmetric_noise,
};
use stgraph_core::{
    evaluate, jmean, segment, solve, FeatureMapSet, FlowField, GroundTruthMasks, SegmentationMasks, SolverConfig,
    SpaceTimeGraph, VideoDims, VideoVolume,
};

use crate::args::{Command, MetricsArgs, OracleArgs, RunArgs, RunConfig, Scale, SweepArgs, SynthArgs};

/// A command failure, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or inputs; exit code 2.
    Usage(anyhow::Error),
    /// Anything that went wrong after validation; exit code 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<stgraph_core::Error> for Failure {
    fn from(e: stgraph_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

trait UsageExt<T> {
    fn usage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> UsageExt<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

type CmdResult = Result<(), Failure>;

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Segment(args) => cmd_segment(&args),
        Command::Ike(args) => cmd_ike(&args),
        Command::Oracle(args) => cmd_oracle(&args),
        Command::SweepQ(args) => cmd_sweep_q(&args),
        Command::Synth(args) => cmd_synth(&args),
        Command::Metrics(args) => cmd_metrics(&args),
    }
}

fn apply_threads(threads: Option<usize>) -> CmdResult {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

fn check_dims(what: &str, found: VideoDims, expected: VideoDims) -> CmdResult {
    if found != expected {
        return Err(Failure::Usage(anyhow!(
            "{what} is {}x{}x{} (frames x h x w) but the flow describes {}x{}x{}",
            found.frames,
            found.height,
            found.width,
            expected.frames,
            expected.height,
            expected.width
        )));
    }
    Ok(())
}

/// Flow plus the optional frames and ground truth of one video, with
/// matching shapes.
struct VideoInputs {
    flow: FlowField,
    video: Option<VideoVolume>,
    gt: Option<GroundTruthMasks>,
}

fn load_inputs(cfg: &RunConfig) -> Result<VideoInputs, Failure> {
    let flow_dir = RunConfig::require_dir(&cfg.flow, "--flow").usage()?;
    let frames_dir = RunConfig::optional_dir(&cfg.frames, "--frames").usage()?;
    let gt_dir = RunConfig::optional_dir(&cfg.gt, "--gt").usage()?;
    let flow = load_flow_dir(&flow_dir).usage()?;
    let video = frames_dir.map(load_frames_dir).transpose().usage()?;
    let gt = gt_dir.map(load_masks_dir).transpose().usage()?;
    if let Some(v) = &video {
        check_dims("--frames", v.dims(), flow.dims())?;
    }
    if let Some(g) = &gt {
        check_dims("--gt", g.dims(), flow.dims())?;
    }
    Ok(VideoInputs { flow, video, gt })
}

fn cmd_segment(args: &RunArgs) -> CmdResult {
    let cfg = args.resolve(SolverConfig::default()).usage()?;
    let out = cfg.require_out().usage()?;
    let inputs = load_inputs(&cfg)?;
    apply_threads(cfg.threads)?;

    let (graph, solution) = segment(&inputs.flow, &cfg.solver)?;
    let masks = solution.masks(&graph, cfg.tau)?;
    if masks.is_constant() {
        warn!("label vector is constant; masks carry no segmentation");
    }
    export_pseudo_labels(&masks, &out)?;
    let diag = &solution.diagnostics;
    if cfg.dump_diagnostics {
        diag.write_csv(out.join("diagnostics.csv"))?;
    }
    let rayleigh = diag.iterations.last().map_or(f64::NAN, |r| r.rayleigh);
    println!(
        "nodes={} features={} edges={} iterations={} converged={} rayleigh={rayleigh:.6e}",
        graph.motion.nodes(),
        solution.features.cols(),
        graph.motion.num_edges(),
        diag.iterations_used(),
        diag.converged
    );
    if let Some(gt) = &inputs.gt {
        let report = evaluate(&masks, gt)?;
        report.write_csv(out.join("metrics.csv"))?;
        println!("jmean={:.6} mae={:.6}", report.jmean, report.mae);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_ike(args: &RunArgs) -> CmdResult {
    let cfg = args.resolve(SolverConfig::default()).usage()?;
    let out = cfg.require_out().usage()?;
    let inputs = load_inputs(&cfg)?;
    let network = cfg
        .network_cmd
        .as_ref()
        .map(|c| NetworkInvocation::new(c.clone(), cfg.network_timeout))
        .transpose()
        .usage()?;
    if network.is_some() && inputs.video.is_none() {
        return Err(Failure::Usage(anyhow!("--network-cmd needs --frames")));
    }
    let ike = IkeConfig {
        solver: cfg.solver.clone(),
        cycles: cfg.cycles,
        threshold: cfg.tau,
        network,
        workspace: Some(out.clone()),
    };
    ike.validate().usage()?;
    apply_threads(cfg.threads)?;

    let outcome = run_ike(&inputs.flow, inputs.video.as_ref(), inputs.gt.as_ref(), &ike)?;
    let final_masks = outcome.final_masks();
    export_pseudo_labels(final_masks, &out)?;

    let mut summary = String::from("cycle,feature_dim,jmean,mae\n");
    for state in &outcome.cycles {
        let (j, m) = state
            .metrics
            .as_ref()
            .map_or((String::new(), String::new()), |r| (format!("{:.6}", r.jmean), format!("{:.6}", r.mae)));
        writeln!(summary, "{},{},{j},{m}", state.cycle, state.feature_dim).expect("write to string");
        println!("cycle={} features={} jmean={}", state.cycle, state.feature_dim, if j.is_empty() { "-" } else { &j });
    }
    write_atomic(&out.join("cycles.csv"), summary.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}

const ORACLE_COSINE: f64 = 1.0 - 1e-6;

fn cmd_oracle(args: &OracleArgs) -> CmdResult {
    let base = SolverConfig {
        lambda: Some(0.0),
        prune_tol: Some(1e-8),
        max_iters: 1000,
        tol: 1e-10,
        ..SolverConfig::default()
    };
    let cfg = args.run.resolve(base).usage()?;
    if args.k == 0 {
        return Err(Failure::Usage(anyhow!("--k must be >= 1")));
    }
    if let Some(r) = args.perturb {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Failure::Usage(anyhow!("--perturb must be a positive number, got {r}")));
        }
    }
    let (flow, gt) = if cfg.flow.is_some() {
        let inputs = load_inputs(&cfg)?;
        (inputs.flow, inputs.gt)
    } else {
        let spec = synth_corpus(&CorpusSpec::oracle_scale(1, cfg.solver.seed))?.remove(0);
        let scene = synth_scene(&spec)?;
        (scene.flow, Some(scene.masks))
    };
    let n = flow.dims().nodes();
    if args.k > n {
        return Err(Failure::Usage(anyhow!("--k {} exceeds the node count {n}", args.k)));
    }
    apply_threads(cfg.threads)?;

    let graph = SpaceTimeGraph::build(&flow, &cfg.solver)?;
    let features = graph.features(&FeatureMapSet::from_flow(&flow), &cfg.solver)?;
    let cache = cfg.solver.build_cache(&features)?;
    let (x, diag) = solve(&graph.motion, &features, &cache, &cfg.solver)?;
    let explicit = build_explicit(&graph.motion, &features, cache.lambda())?;
    let a = &explicit.a;
    let start = vec![1.0; n];
    let dense = dense_power_iteration(a, &start, 100_000, 1e-12)?;
    let cosine = cosine(x.values(), &dense.vector);

    println!("nodes={n} features={} lambda={:e}", features.cols(), cache.lambda());
    println!("solver iterations={} converged={}", diag.iterations_used(), diag.converged);
    println!("dense iterations={} eigenvalue={:.12e}", dense.iterations, dense.value);
    println!("cosine={cosine:.15} (1 - {:.3e})", 1.0 - cosine);

    let spec = spectrum(a, args.k)?;
    let shown: Vec<String> = spec.eigenvalues.iter().map(|v| format!("{v:.6e}")).collect();
    println!("eigenvalues {}", shown.join(" "));
    if args.k >= 2 {
        println!("eigengap={:.6e} ratio={:.6}", spec.eigengap(), spec.ratio());
    }

    if let Some(rel) = args.perturb {
        let e = symmetric_noise(a, rel, cfg.solver.seed);
        let report = perturbation_bound(a, &e)?;
        let after = dense_power_iteration(&a.add(&e)?, &start, 100_000, 1e-12)?;
        let angle = rotation_angle(&dense.vector, &after.vector);
        println!(
            "perturbation relative={rel} e_frobenius={:.6e} a_frobenius={:.6e} epsilon={:.6e} rotation={angle:.6e} within_bound={}",
            report.e_frobenius,
            report.a_frobenius,
            report.epsilon,
            angle <= report.epsilon
        );
    }

    if let Some(out) = &cfg.out {
        create_dir_all(out)?;
        write_atomic(&out.join("spectrum.csv"), spec.to_csv().as_bytes())?;
        a.write_tensor(out.join("a.stgt"))?;
        if let Some(gt) = &gt {
            let fg: Vec<bool> = gt.labels().iter().map(|&l| l != 0).collect();
            let (reordered, _) = reorder_foreground_first(a, &fg)?;
            reordered.write_tensor(out.join("a_foreground_first.stgt"))?;
        }
        println!("wrote {}", out.display());
    }

    if cosine < ORACLE_COSINE {
        return Err(Failure::Runtime(anyhow!(
            "implicit and dense eigenvectors disagree: cosine {cosine:.9} < {ORACLE_COSINE}"
        )));
    }
    Ok(())
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    (dot / (nu * nv)).abs()
}

/// Subdirectories of `root` holding both `flow/` and `gt/`, in name order.
fn corpus_videos(root: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut videos: Vec<PathBuf> = fs::read_dir(root)
        .with_context(|| format!("listing {}", root.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("flow").is_dir() && p.join("gt").is_dir())
        .collect();
    videos.sort();
    Ok(videos)
}

fn cmd_sweep_q(args: &SweepArgs) -> CmdResult {
    let cfg = args.run.resolve(SolverConfig::default()).usage()?;
    let root = RunConfig::require_dir(&args.corpus, "--corpus").usage()?;
    if args.q_list.is_empty() {
        return Err(Failure::Usage(anyhow!("--q-list is empty")));
    }
    let videos = corpus_videos(&root).usage()?;
    if videos.is_empty() {
        return Err(Failure::Usage(anyhow!(
            "--corpus {} holds no video directories with flow/ and gt/",
            root.display()
        )));
    }
    let loaded = videos
        .iter()
        .map(|v| {
            let flow = load_flow_dir(v.join("flow"))?;
            let gt = load_masks_dir(v.join("gt"))?;
            check_dims("gt", gt.dims(), flow.dims())?;
            Ok((flow, gt))
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    apply_threads(cfg.threads)?;

    let mut csv = String::from("q,jmean\n");
    println!("q,jmean");
    for &q in &args.q_list {
        let solver = SolverConfig {
            half_window: q,
            ..cfg.solver.clone()
        };
        let mut total = 0.0;
        for (flow, gt) in &loaded {
            let (graph, solution) = segment(flow, &solver)?;
            total += jmean(&solution.masks(&graph, cfg.tau)?, gt)?;
        }
        let mean = total / loaded.len() as f64;
        info!("q = {q}: J mean {mean:.4} over {} videos", loaded.len());
        writeln!(csv, "{q},{mean:.6}").expect("write to string");
        println!("{q},{mean:.6}");
    }
    if let Some(out) = &cfg.out {
        create_dir_all(out)?;
        write_atomic(&out.join("sweep_q.csv"), csv.as_bytes())?;
    }
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> CmdResult {
    if args.videos == 0 {
        return Err(Failure::Usage(anyhow!("--videos must be >= 1")));
    }
    let spec = match args.scale {
        Scale::Desk => CorpusSpec::desk_scale(args.videos, args.seed),
        Scale::Oracle => CorpusSpec::oracle_scale(args.videos, args.seed),
    };
    for (i, scene_spec) in synth_corpus(&spec)?.iter().enumerate() {
        let scene = synth_scene(scene_spec)?;
        let dir = args.out.join(format!("video_{i:03}"));
        save_frames_dir(&scene.video, dir.join("frames"))?;
        save_flow_dir(&scene.flow, dir.join("flow"))?;
        save_masks_dir(&scene.masks, dir.join("gt"), "gt")?;
        write_atomic(&dir.join("scene.txt"), format!("{scene_spec:#?}\n").as_bytes())?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

/// Reads predicted masks. Binary masks come from `mask_*.pgm` when present
/// (otherwise every `*.pgm`), soft values from `soft_*.pgm` when present.
/// A directory without masks but with a `masks/` child is searched there.
fn load_predictions(dir: &Path, tau: f64) -> anyhow::Result<SegmentationMasks> {
    let mut files = list_with_extension(dir, "pgm")?;
    if files.is_empty() && dir.join("masks").is_dir() {
        return load_predictions(&dir.join("masks"), tau);
    }
    let named = |prefix: &str| -> Vec<PathBuf> {
        files
            .iter()
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(prefix)))
            .cloned()
            .collect()
    };
    let (soft, binary) = (named("soft_"), named("mask_"));
    if !binary.is_empty() {
        files = binary;
    }
    let source = if !soft.is_empty() { soft } else { files };
    if source.is_empty() {
        return Err(anyhow!("no .pgm masks in {}", dir.display()));
    }
    let mut values = Vec::new();
    let mut size = None;
    for path in &source {
        let img = read_pgm(path)?;
        if *size.get_or_insert((img.height, img.width)) != (img.height, img.width) {
            return Err(anyhow!("{}: frame size differs from the first mask", path.display()));
        }
        values.extend(img.data.iter().map(|&v| v as f32 / 255.0));
    }
    let (h, w) = size.expect("at least one mask");
    Ok(SegmentationMasks::from_soft(VideoDims::new(source.len(), h, w), values, tau)?)
}

fn cmd_metrics(args: &MetricsArgs) -> CmdResult {
    if !(0.0..=1.0).contains(&args.tau) {
        return Err(Failure::Usage(anyhow!("--tau must lie in [0, 1], got {}", args.tau)));
    }
    let pred = load_predictions(&args.pred, args.tau).usage()?;
    let gt = load_masks_dir(&args.gt).usage()?;
    if pred.dims() != gt.dims() {
        return Err(Failure::Usage(anyhow!(
            "--pred holds {:?} but --gt holds {:?}",
            pred.dims(),
            gt.dims()
        )));
    }
    let report = evaluate(&pred, &gt)?;
    println!("jmean={:.6} mae={:.6} frames={}", report.jmean, report.mae, report.frames.len());
    if let Some(out) = &args.out {
        report.write_csv(out)?;
    }
    Ok(())
}
