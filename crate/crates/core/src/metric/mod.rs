//! Conformal distances from ε-graphs: chain-ball and line-integral edge
//! weights, shortest paths, refinement in ε, f-balls and stable norms.

mod graph;
mod io;
mod paths;
mod refine;
mod stable;

pub use graph::{build_graph, edge_seed, EpsGraph, Estimator};
pub use io::{read_distance_matrix, write_distance_csv, write_distance_matrix, DistanceManifest};
pub use paths::{
    cell_volumes, dijkstra, f_ball, f_ball_with, node_masses, shortest_paths, shortest_paths_to, DistanceMatrix, FBall,
    Provenance,
};
pub use refine::{extrapolate, refine_distance, snap, LevelInfo, PairRefinement, RefineOptions, RefineReport};
pub use stable::{stable_norm, StableNormOptions, StableNormReport};
