//! Clustering paths over an increasing grid of regularization weights.

use std::sync::Arc;
use std::time::Instant;

use petgraph::unionfind::UnionFind;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{build_knn_graph, WeightedGraph};
use crate::iadmm::{iadmm_run, AdmmConfig, AdmmStop};
use crate::linalg::{norm2, DataMatrix, Mat};
use crate::ssnal::{solve, Iterate, KktResidual, Problem, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathConfig {
    /// Strictly increasing, positive.
    pub gamma_grid: Vec<f64>,
    /// Start each solve from the previous optimum.
    pub warm_start: bool,
    pub solver: SolverConfig,
    /// Relative tolerance for fusing two centroids.
    pub cluster_tol: f64,
    /// ADMM sweeps before the first solve (0 disables).
    pub warmstart_iters: usize,
    pub admm: AdmmConfig,
    /// Compare all centroid pairs instead of only graph neighbors.
    pub all_pairs_merge: bool,
}

impl PathConfig {
    pub fn new(gamma_grid: Vec<f64>) -> Self {
        Self {
            gamma_grid,
            warm_start: true,
            solver: SolverConfig::default(),
            cluster_tol: 1e-5,
            warmstart_iters: 100,
            admm: AdmmConfig::default(),
            all_pairs_merge: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_grid(&self.gamma_grid)?;
        if !(self.cluster_tol >= 0.0) {
            return Err(Error::Parameter("cluster_tol must be >= 0".into()));
        }
        self.solver.validate()?;
        self.admm.validate()
    }
}

pub fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Parameter("gamma grid is empty".into()));
    }
    if grid.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::Parameter("gamma grid values must be positive".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Parameter("gamma grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Parses `start:step:stop` (inclusive of `stop` up to rounding) or a
/// single value.
pub fn parse_gamma_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').map(str::trim).collect();
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parameter(format!("bad number {s:?} in grid {text:?}")));
    let grid = match parts.as_slice() {
        [one] => vec![num(one)?],
        [start, step, stop] => {
            let (start, step, stop) = (num(start)?, num(step)?, num(stop)?);
            if !(step > 0.0) || !step.is_finite() {
                return Err(Error::Parameter(format!("grid step must be positive in {text:?} (grid must ascend)")));
            }
            if stop < start {
                return Err(Error::Parameter(format!("grid {text:?} must ascend")));
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            (0..count)
                .map(|i| {
                    let v = start + i as f64 * step;
                    (v * 1e12).round() / 1e12
                })
                .collect()
        }
        _ => return Err(Error::Parameter(format!("grid {text:?} is not of the form start:step:stop"))),
    };
    validate_grid(&grid)?;
    Ok(grid)
}

/// One solved grid point.
#[derive(Clone, Debug)]
pub struct PathPoint {
    pub gamma: f64,
    pub x: Mat,
    pub assignment: Vec<usize>,
    pub num_clusters: usize,
    pub kkt: KktResidual,
    pub primal_obj: f64,
    pub converged: bool,
    /// Seconds in the augmented Lagrangian solve.
    pub solve_seconds: f64,
    /// Seconds in the ADMM warm start preceding this solve (first point only).
    pub warmstart_seconds: f64,
    pub outer_iters: usize,
    pub newton_iters: usize,
    pub cg_iters: usize,
}

/// Solver failure that truncated a path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathFailure {
    pub gamma: f64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct ClusteringPath {
    pub points: Vec<PathPoint>,
    pub failure: Option<PathFailure>,
    pub num_edges: usize,
    pub graph_seconds: f64,
}

impl ClusteringPath {
    pub fn all_converged(&self) -> bool {
        self.failure.is_none() && self.points.iter().all(|p| p.converged)
    }
}

/// Builds the k-NN graph once and traces the path over `config.gamma_grid`.
pub fn clustering_path(a: &DataMatrix, k: usize, phi: f64, config: &PathConfig) -> Result<ClusteringPath> {
    config.validate()?;
    let t = Instant::now();
    let graph = build_knn_graph(a, k, phi)?;
    let graph_seconds = t.elapsed().as_secs_f64();
    let mut path = clustering_path_on_graph(Arc::new(a.clone()), Arc::new(graph), config)?;
    path.graph_seconds = graph_seconds;
    Ok(path)
}

/// Path on a prebuilt graph. The first grid point is preceded by
/// `warmstart_iters` ADMM sweeps; later points start from the previous
/// optimum when `warm_start` is set, otherwise each point repeats the
/// first-point procedure.
pub fn clustering_path_on_graph(
    a: Arc<DataMatrix>,
    graph: Arc<WeightedGraph>,
    config: &PathConfig,
) -> Result<ClusteringPath> {
    config.validate()?;
    let num_edges = graph.num_edges();
    let mut points = Vec::with_capacity(config.gamma_grid.len());
    let mut failure = None;
    let mut previous: Option<Iterate> = None;
    let base = Problem::from_shared(a, graph.clone(), config.gamma_grid[0])?;

    for &gamma in &config.gamma_grid {
        let problem = base.with_gamma(gamma)?;
        let outcome = (|| -> Result<PathPoint> {
            let mut warmstart_seconds = 0.0;
            let init = match previous.take().filter(|_| config.warm_start) {
                Some(it) => Some(it),
                None if config.warmstart_iters > 0 => {
                    let t = Instant::now();
                    let warm = iadmm_run(&problem, &config.admm, None, AdmmStop::Iterations(config.warmstart_iters))?;
                    warmstart_seconds = t.elapsed().as_secs_f64();
                    Some(warm.into_iterate())
                }
                None => None,
            };
            let res = solve(&problem, &config.solver, init)?;
            let (assignment, num_clusters) = if config.all_pairs_merge {
                extract_clusters_all_pairs(&res.x, config.cluster_tol)
            } else {
                extract_clusters(&res.x, &graph, config.cluster_tol)
            };
            let point = PathPoint {
                gamma,
                x: res.x.clone(),
                assignment,
                num_clusters,
                kkt: res.kkt,
                primal_obj: res.primal_obj,
                converged: res.converged,
                solve_seconds: res.seconds,
                warmstart_seconds,
                outer_iters: res.outer_iters,
                newton_iters: res.total_newton_iters,
                cg_iters: res.total_cg_iters,
            };
            previous = Some(res.into_iterate());
            Ok(point)
        })();
        match outcome {
            Ok(p) => points.push(p),
            Err(e) => {
                failure = Some(PathFailure { gamma, message: e.to_string() });
                break;
            }
        }
    }
    Ok(ClusteringPath { points, failure, num_edges, graph_seconds: 0.0 })
}

#[inline]
fn fused(a: &[f64], b: &[f64], tol: f64) -> bool {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    diff <= tol * (1.0 + norm2(a).max(norm2(b)))
}

fn label_components(uf: &UnionFind<usize>, n: usize) -> (Vec<usize>, usize) {
    let mut root_label = vec![usize::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut next = 0;
    for v in 0..n {
        let r = uf.find(v);
        if root_label[r] == usize::MAX {
            root_label[r] = next;
            next += 1;
        }
        labels.push(root_label[r]);
    }
    (labels, next)
}

/// Merges `i` and `j` across graph edges when
/// `||x_i - x_j|| <= cluster_tol (1 + max(||x_i||, ||x_j||))`. Cluster ids
/// follow the smallest member index.
pub fn extract_clusters(x: &Mat, graph: &WeightedGraph, cluster_tol: f64) -> (Vec<usize>, usize) {
    let n = x.cols();
    let mut uf = UnionFind::new(n);
    for &(i, j) in graph.edges() {
        if fused(x.col(i), x.col(j), cluster_tol) {
            uf.union(i, j);
        }
    }
    label_components(&uf, n)
}

/// Variant of [`extract_clusters`] that tests every pair, `O(n^2 d)`.
pub fn extract_clusters_all_pairs(x: &Mat, cluster_tol: f64) -> (Vec<usize>, usize) {
    let n = x.cols();
    let mut uf = UnionFind::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if fused(x.col(i), x.col(j), cluster_tol) {
                uf.union(i, j);
            }
        }
    }
    label_components(&uf, n)
}
