#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stgraph_core::flow_io::{synth_corpus, synth_scene, CorpusSpec, SynthScene};
use stgraph_core::{
    FeatureMapSet, FeatureMatrix, FlowField, FlowPlane, RidgeSolveCache, SolverConfig, SpaceTimeGraph, VideoDims,
};

pub const PRUNE_TOL: f64 = 1e-8;

/// A scene with its graph and a full-rank (pruned) flow feature matrix,
/// ready for `lambda = 0` comparisons against the dense oracle.
pub struct Instance {
    pub scene: SynthScene,
    pub graph: SpaceTimeGraph,
    pub features: FeatureMatrix,
    pub cache: RidgeSolveCache,
}

pub fn exact_config() -> SolverConfig {
    SolverConfig {
        lambda: Some(0.0),
        prune_tol: Some(PRUNE_TOL),
        ..Default::default()
    }
}

pub fn instance(scene: SynthScene, config: &SolverConfig) -> Instance {
    let graph = SpaceTimeGraph::build(&scene.flow, config).unwrap();
    let features = graph.features(&FeatureMapSet::from_flow(&scene.flow), config).unwrap();
    let cache = config.build_cache(&features).unwrap();
    Instance {
        scene,
        graph,
        features,
        cache,
    }
}

pub fn oracle_corpus(videos: usize, seed: u64) -> Vec<SynthScene> {
    synth_corpus(&CorpusSpec::oracle_scale(videos, seed))
        .unwrap()
        .iter()
        .map(|s| synth_scene(s).unwrap())
        .collect()
}

pub fn desk_corpus(videos: usize, seed: u64) -> Vec<SynthScene> {
    synth_corpus(&CorpusSpec::desk_scale(videos, seed))
        .unwrap()
        .iter()
        .map(|s| synth_scene(s).unwrap())
        .collect()
}

/// Per-pixel random flow in `[-amp, amp]`, unrelated between directions.
pub fn random_flow(dims: VideoDims, amp: f32, seed: u64) -> FlowField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plane = |rng: &mut ChaCha8Rng| {
        let mut p = FlowPlane::zeros(dims.height, dims.width);
        for r in 0..dims.height {
            for c in 0..dims.width {
                p.set(r, c, (rng.gen_range(-amp..=amp), rng.gen_range(-amp..=amp)));
            }
        }
        p
    };
    let forward = (0..dims.frames - 1).map(|_| plane(&mut rng)).collect();
    let backward = (0..dims.frames - 1).map(|_| plane(&mut rng)).collect();
    FlowField::new(dims, forward, backward).unwrap()
}

pub fn random_vector(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn rel_err(got: &[f64], want: &[f64]) -> f64 {
    let diff: Vec<f64> = got.iter().zip(want).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(want).max(f64::MIN_POSITIVE)
}

pub fn abs_cosine(a: &[f64], b: &[f64]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).abs()
}
