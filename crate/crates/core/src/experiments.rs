//! Timing suites: path cost versus `n`, versus `k`, and per-`gamma` solve
//! times.

use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::datagen::two_half_moons;
use crate::error::{Error, Result};
use crate::graph::build_knn_graph;
use crate::path::{clustering_path_on_graph, ClusteringPath, PathConfig};
use crate::ssnal::SolverConfig;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchSettings {
    /// Half-moon sizes for the `n` suite.
    pub sizes: Vec<usize>,
    /// Neighbor counts for the `k` suite.
    pub ks: Vec<usize>,
    /// Size used by the `k` and `gamma` suites.
    pub fixed_n: usize,
    pub knn: usize,
    pub phi: f64,
    pub noise_sd: f64,
    /// Grid for the scaling suites.
    pub scaling_grid: Vec<f64>,
    /// Grid for the sensitivity suite.
    pub sensitivity_grid: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub warmstart_iters: usize,
}

impl Default for BenchSettings {
    fn default() -> Self {
        let grid = |start: f64, step: f64, count: usize| -> Vec<f64> {
            (1..=count).map(|i| ((start + (i - 1) as f64 * step) * 1e12).round() / 1e12).collect()
        };
        Self {
            sizes: vec![200, 500, 1000, 2000],
            ks: (1..=10).map(|i| 5 * i).collect(),
            fixed_n: 2000,
            knn: 10,
            phi: 0.5,
            noise_sd: 0.1,
            scaling_grid: grid(0.4, 0.4, 50),
            sensitivity_grid: grid(0.2, 0.2, 50),
            reps: 1,
            seed: 1,
            solver: SolverConfig::default(),
            warmstart_iters: 100,
        }
    }
}

/// One measured cell. For the scaling suites `seconds` is the mean SSNAL
/// time per grid point of a warm-started path; for the sensitivity suite it
/// is the SSNAL time of one independent solve. ADMM warm-start time is
/// reported separately, averaged the same way.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchRow {
    pub suite: String,
    pub n: usize,
    pub k: usize,
    pub gamma: Option<f64>,
    pub rep: usize,
    pub num_edges: usize,
    pub seconds: f64,
    pub warmstart_seconds: f64,
    pub outer_iters: usize,
    pub newton_iters: usize,
    pub cg_iters: usize,
    pub converged: bool,
    pub num_clusters: usize,
}

fn run_path(n: usize, k: usize, rep: usize, grid: &[f64], warm: bool, s: &BenchSettings) -> Result<ClusteringPath> {
    let ds = two_half_moons(n, s.noise_sd, s.seed.wrapping_add(rep as u64))?;
    let graph = build_knn_graph(&ds.data, k, s.phi)?;
    let mut config = PathConfig::new(grid.to_vec());
    config.solver = s.solver.clone();
    config.warm_start = warm;
    config.warmstart_iters = s.warmstart_iters;
    clustering_path_on_graph(Arc::new(ds.data), Arc::new(graph), &config)
}

fn path_row(suite: &str, n: usize, k: usize, rep: usize, path: &ClusteringPath) -> Result<BenchRow> {
    if let Some(f) = &path.failure {
        return Err(Error::NumericalFailure(format!(
            "{suite} n={n} k={k}: solve failed at gamma={}: {}",
            f.gamma, f.message
        )));
    }
    let m = path.points.len().max(1) as f64;
    let solve: f64 = path.points.iter().map(|p| p.solve_seconds).sum();
    let warm: f64 = path.points.iter().map(|p| p.warmstart_seconds).sum();
    Ok(BenchRow {
        suite: suite.into(),
        n,
        k,
        gamma: None,
        rep,
        num_edges: path.num_edges,
        seconds: solve / m,
        warmstart_seconds: warm / m,
        outer_iters: path.points.iter().map(|p| p.outer_iters).sum(),
        newton_iters: path.points.iter().map(|p| p.newton_iters).sum(),
        cg_iters: path.points.iter().map(|p| p.cg_iters).sum(),
        converged: path.all_converged(),
        num_clusters: path.points.last().map_or(0, |p| p.num_clusters),
    })
}

/// Mean per-point path time for every size in `settings.sizes`.
pub fn scaling_n(settings: &BenchSettings) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &n in &settings.sizes {
        for rep in 0..settings.reps {
            let path = run_path(n, settings.knn, rep, &settings.scaling_grid, true, settings)?;
            rows.push(path_row("scaling-n", n, settings.knn, rep, &path)?);
        }
    }
    Ok(rows)
}

/// Mean per-point path time for every `k` in `settings.ks` at `fixed_n`.
pub fn scaling_k(settings: &BenchSettings) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &k in &settings.ks {
        for rep in 0..settings.reps {
            let path = run_path(settings.fixed_n, k, rep, &settings.scaling_grid, true, settings)?;
            rows.push(path_row("scaling-k", settings.fixed_n, k, rep, &path)?);
        }
    }
    Ok(rows)
}

/// Independent solve (ADMM sweeps plus SSNAL) at every `gamma` of the
/// sensitivity grid.
pub fn gamma_sensitivity(settings: &BenchSettings) -> Result<Vec<BenchRow>> {
    let n = settings.fixed_n;
    let mut rows = Vec::new();
    for rep in 0..settings.reps {
        let path = run_path(n, settings.knn, rep, &settings.sensitivity_grid, false, settings)?;
        if let Some(f) = &path.failure {
            return Err(Error::NumericalFailure(format!(
                "gamma-sensitivity: solve failed at gamma={}: {}",
                f.gamma, f.message
            )));
        }
        for p in &path.points {
            rows.push(BenchRow {
                suite: "gamma-sensitivity".into(),
                n,
                k: settings.knn,
                gamma: Some(p.gamma),
                rep,
                num_edges: path.num_edges,
                seconds: p.solve_seconds,
                warmstart_seconds: p.warmstart_seconds,
                outer_iters: p.outer_iters,
                newton_iters: p.newton_iters,
                cg_iters: p.cg_iters,
                converged: p.converged,
                num_clusters: p.num_clusters,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Parameter("need at least two (x, y) pairs".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Parameter("log-log fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Parameter("log-log fit needs distinct x values".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Averages `seconds` over repetitions, keyed by `key(row)` in first-seen
/// order.
pub fn mean_seconds_by<F: Fn(&BenchRow) -> f64>(rows: &[BenchRow], key: F) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64, usize)> = Vec::new();
    for r in rows {
        let k = key(r);
        match out.iter_mut().find(|(x, _, _)| *x == k) {
            Some(slot) => {
                slot.1 += r.seconds;
                slot.2 += 1;
            }
            None => out.push((k, r.seconds, 1)),
        }
    }
    out.into_iter().map(|(k, s, c)| (k, s / c as f64)).collect()
}

/// Wall-clock helper for callers that time whole suites.
pub fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let t = Instant::now();
    let v = f()?;
    Ok((v, t.elapsed().as_secs_f64()))
}
