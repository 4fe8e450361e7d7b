//! Shared fixtures for the criterion benches.

use stgraph_core::flow_io::{synth_scene, ObjectShape, SynthScene, SynthSceneSpec};
use stgraph_core::{FeatureMapSet, FeatureMatrix, RidgeSolveCache, SolverConfig, SpaceTimeGraph};

/// A rectangle drifting right over a diagonally moving background.
pub fn scene(frames: usize, height: usize, width: usize) -> SynthScene {
    synth_scene(&SynthSceneSpec {
        frames,
        height,
        width,
        shape: ObjectShape::Rect {
            height: height as f64 * 0.3,
            width: width as f64 * 0.2,
        },
        position: (height as f64 * 0.5, width as f64 * 0.15),
        object_velocity: (1.0, 0.0),
        background_velocity: (2.0, 1.0),
        noise: 0.0,
        seed: 1,
    })
    .expect("bench scene stays in frame")
}

/// Everything one solver iteration needs.
pub struct Prepared {
    pub scene: SynthScene,
    pub graph: SpaceTimeGraph,
    pub features: FeatureMatrix,
    pub cache: RidgeSolveCache,
}

pub fn prepare(frames: usize, height: usize, width: usize, config: &SolverConfig) -> Prepared {
    let scene = scene(frames, height, width);
    let graph = SpaceTimeGraph::build(&scene.flow, config).expect("graph");
    let features = graph
        .features(&FeatureMapSet::from_flow(&scene.flow), config)
        .expect("features");
    let cache = config.build_cache(&features).expect("ridge cache");
    Prepared {
        scene,
        graph,
        features,
        cache,
    }
}

/// A deterministic dense `rows x cols` feature matrix.
pub fn feature_matrix(rows: usize, cols: usize) -> FeatureMatrix {
    let data = (0..rows * cols)
        .map(|i| ((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) >> 40) as f64 / (1u64 << 24) as f64 - 0.5)
        .collect();
    FeatureMatrix::new(rows, cols, data).expect("feature matrix")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let p = prepare(4, 24, 32, &SolverConfig::default());
        assert_eq!(p.graph.motion.nodes(), 4 * 24 * 32);
        assert_eq!(p.features.rows(), p.graph.motion.nodes());
        let f = feature_matrix(10, 3);
        assert!(f.data().iter().all(|v| (-0.5..0.5).contains(v)));
    }
}
