//! End-to-end graph solve for one video.

use crate::error::Result;
use crate::features::{build_features, FeatureMapSet, FeatureMatrix};
use crate::flow_io::FlowField;
use crate::masks::{to_masks, SegmentationMasks};
use crate::motion_graph::{build_chains, build_motion_graph, ChainIndex, MotionGraph};
use crate::projection::RidgeSolveCache;
use crate::solver::{solve, LabelVector, SolveDiagnostics, SolverConfig};

/// Chains and motion matrix for one video. Both depend only on flow, so one
/// instance serves every cycle.
#[derive(Debug, Clone)]
pub struct SpaceTimeGraph {
    pub chains: ChainIndex,
    pub motion: MotionGraph,
}

impl SpaceTimeGraph {
    pub fn build(flow: &FlowField, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let chains = build_chains(flow);
        let motion = build_motion_graph(&chains, config.radius, config.sigma_t)?;
        Ok(Self { chains, motion })
    }

    pub fn features(&self, maps: &FeatureMapSet, config: &SolverConfig) -> Result<FeatureMatrix> {
        build_features(&self.chains, maps, &config.feature_config())
    }

    pub fn solve(&self, maps: &FeatureMapSet, config: &SolverConfig) -> Result<GraphSolution> {
        let features = self.features(maps, config)?;
        let cache = config.build_cache(&features)?;
        let (labels, diagnostics) = solve(&self.motion, &features, &cache, config)?;
        Ok(GraphSolution {
            features,
            cache,
            labels,
            diagnostics,
        })
    }
}

#[derive(Debug, Clone)]
pub struct GraphSolution {
    pub features: FeatureMatrix,
    pub cache: RidgeSolveCache,
    pub labels: LabelVector,
    pub diagnostics: SolveDiagnostics,
}

impl GraphSolution {
    pub fn masks(&self, graph: &SpaceTimeGraph, threshold: f64) -> Result<SegmentationMasks> {
        to_masks(self.labels.values(), graph.motion.dims(), threshold)
    }
}

/// Flow-feature solve of a single video.
pub fn segment(flow: &FlowField, config: &SolverConfig) -> Result<(SpaceTimeGraph, GraphSolution)> {
    let graph = SpaceTimeGraph::build(flow, config)?;
    let solution = graph.solve(&FeatureMapSet::from_flow(flow), config)?;
    Ok((graph, solution))
}
