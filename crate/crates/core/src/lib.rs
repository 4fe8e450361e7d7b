//! Matrix-free space-time spectral clustering for video object segmentation.
//!
//! Pixels of a video are linked along optical-flow chains into a sparse
//! motion matrix `M`. Per-pixel features gathered along the same chains form
//! `F`, and the segmentation is the leading eigenvector of `P M P`, where `P`
//! projects onto the column space of `F`. The solver never forms `P M P`; it
//! alternates a sparse product with a small ridge solve.

pub mod error;
pub mod features;
pub mod flow_io;
pub mod fsutil;
pub mod ike;
pub mod masks;
pub mod motion_graph;
pub mod oracle;
pub mod pipeline;
pub mod projection;
pub mod solver;
pub mod tensor;
pub mod video;

pub use error::{Error, Result};
pub use features::{build_features, FeatureConfig, FeatureMapSet, FeatureMatrix, MAX_FEATURE_DIM};
pub use flow_io::{FlowField, FlowPlane};
pub use masks::{evaluate, jmean, mae, relative_change, to_masks, MetricsReport, SegmentationMasks};
pub use motion_graph::{build_chains, build_motion_graph, ChainIndex, MotionGraph};
pub use pipeline::{segment, GraphSolution, SpaceTimeGraph};
pub use projection::{project, RidgeSolveCache};
pub use solver::{solve, InitMode, LabelVector, SolveDiagnostics, SolverConfig};
pub use tensor::{read_tensor, write_tensor, Tensor};
pub use video::{GroundTruthMasks, VideoDims, VideoVolume};
