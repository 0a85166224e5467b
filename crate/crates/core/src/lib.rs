//! Outlier removal for non-rigid correspondences without a transformation model.
//!
//! Pairwise agreement rules between small subsets of matches are compiled into a
//! 0-1 covering program: every pair of subsets that disagrees forces at least one
//! of its matches to be an outlier, and the program minimizes the number of
//! outliers. The program is solved exactly with branch and bound (or through its
//! LP relaxation).
//!
//! Two rules are provided:
//!
//! * [`isometry`]: shape-to-shape matching, two matches agree when their
//!   geodesic distances on both surfaces are preserved.
//! * [`template`]: template-to-image matching, two triangles of matches sharing
//!   an edge agree when their P3P camera poses are close.

pub mod consensus;
pub mod error;
pub mod eval;
pub mod io;
pub mod isometry;
pub mod kmeans;
pub mod mesh;
pub mod pose;
pub mod report;
pub mod solver;
pub mod synth;
pub mod template;

pub use consensus::{
    aggregate_labels, build_covering_program, estimate_graph_size, ClusterPartition,
    ClusterOutcome, ConsensusGraph, CoveringProgram, GraphEdge, Label, LabelVector, MatchSet,
    Registration,
};
pub use error::{Error, Result};
pub use kmeans::kmeans_partition;
pub use solver::{solve, solve_exact, solve_relaxed, Mode, SolverConfig, SolverResult, TraceEntry};
