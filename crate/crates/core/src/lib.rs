//! Weighted sum-of-norms (convex) clustering.
//!
//! Solves
//!
//! ```text
//! min_X  1/2 ||X - A||_F^2 + gamma * sum_{(i,j) in E} w_ij ||x_i - x_j||
//! ```
//!
//! over a sparse weighted k-nearest-neighbor graph with a semismooth Newton
//! augmented Lagrangian method ([`ssnal::solve`]). An inexact ADMM
//! ([`iadmm::iadmm_run`]) supplies warm starts and serves as a baseline, and
//! [`path::clustering_path`] traces clusters across a grid of `gamma`.
//!
//! Columns of a [`DataMatrix`] are observations.

// Parameter checks use `!(x > 0.0)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cg;
pub mod datagen;
pub mod direct;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod iadmm;
pub mod linalg;
pub mod par;
pub mod path;
pub mod prox;
pub mod ssnal;
pub mod ssncg;

pub use error::{Error, Result};
pub use graph::{build_knn_graph, WeightedGraph};
pub use iadmm::{iadmm_run, AdmmConfig, AdmmStop};
pub use linalg::{DataMatrix, EdgeMatrix, Mat};
pub use path::{clustering_path, extract_clusters, ClusteringPath, PathConfig};
pub use prox::WeightedNormSpec;
pub use ssnal::{solve, Iterate, KktResidual, Problem, SolveResult, SolverConfig};
pub use ssncg::{LinearSolver, NewtonConfig};
