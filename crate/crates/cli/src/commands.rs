use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;
use serde_json::json;

use sonclust::datagen::{self, DatasetDescriptor, Orientation};
use sonclust::experiments::{self, loglog_slope, mean_seconds_by, BenchRow, BenchSettings};
use sonclust::path::{clustering_path_on_graph, extract_clusters_all_pairs, parse_gamma_grid};
use sonclust::{
    build_knn_graph, extract_clusters, iadmm_run, solve, AdmmConfig, AdmmStop, DataMatrix, KktResidual, LinearSolver,
    PathConfig, Problem, SolverConfig,
};

use crate::cli::{
    BenchArgs, DataArgs, DatasetKind, LinearSolverArg, ModelArgs, OrientationArg, PathArgs, SolveArgs, SolverKind,
    Suite,
};
use crate::error::CliError;
use crate::output::OutputDir;

/// Outcome of a command that ran to completion.
pub enum Status {
    Converged,
    NotConverged(String),
}

struct Loaded {
    data: DataMatrix,
    labels: Option<Vec<usize>>,
    descriptor: DatasetDescriptor,
    warnings: Vec<String>,
}

fn load(args: &DataArgs) -> Result<Loaded, CliError> {
    if let Some(path) = &args.source.input {
        let orientation = match args.orientation {
            OrientationArg::Rows => Orientation::RowsAreObservations,
            OrientationArg::Columns => Orientation::ColumnsAreObservations,
        };
        let mut data = datagen::load_csv(path, orientation, args.header)?;
        let mut warnings = Vec::new();
        if args.scale {
            for c in datagen::degenerate_coordinates(&data) {
                warnings.push(format!("coordinate {c} is constant; scaled to 0.5"));
            }
            data = datagen::scale_unit(&data);
        }
        let mut params = BTreeMap::new();
        params.insert("scaled".to_string(), if args.scale { 1.0 } else { 0.0 });
        let descriptor = DatasetDescriptor {
            name: format!("csv:{}", path.display()),
            seed: None,
            n: data.cols(),
            d: data.rows(),
            params,
        };
        return Ok(Loaded { data, labels: None, descriptor, warnings });
    }
    let ds = match args.source.dataset {
        Some(DatasetKind::Halfmoon) => datagen::two_half_moons(args.n, args.noise_sd, args.seed)?,
        Some(DatasetKind::Ugauss) => {
            if args.size_divisor == 0 {
                return Err(CliError::new("usage", "--size-divisor must be at least 1"));
            }
            let comps = datagen::scaled_unbalanced_components(args.size_divisor);
            datagen::unbalanced_gaussian(args.seed, Some(&comps))?
        }
        None => return Err(CliError::new("usage", "one of --input or --dataset is required")),
    };
    Ok(Loaded { data: ds.data, labels: ds.labels, descriptor: ds.descriptor, warnings: ds.warnings })
}

fn linear_solver(arg: LinearSolverArg) -> LinearSolver {
    match arg {
        LinearSolverArg::Auto => LinearSolver::Auto,
        LinearSolverArg::Cg => LinearSolver::Cg,
        LinearSolverArg::Direct => LinearSolver::Direct,
    }
}

fn solver_config(model: &ModelArgs) -> SolverConfig {
    let mut cfg = SolverConfig::default().with_tol(model.tol);
    cfg.newton.linear_solver = linear_solver(model.linear_solver);
    if let (SolverKind::Ssnal, Some(m)) = (model.solver, model.max_iters) {
        cfg.max_outer = m;
    }
    cfg
}

fn solver_name(kind: SolverKind) -> &'static str {
    match kind {
        SolverKind::Ssnal => "ssnal",
        SolverKind::Iadmm => "iadmm",
    }
}

/// Default sweep cap when ADMM runs to tolerance.
const ADMM_MAX_ITERS: usize = 100_000;

/// Rand index between two labelings via the contingency table.
pub fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    if a.len() < 2 {
        return 1.0;
    }
    let pairs = |counts: &mut dyn Iterator<Item = f64>| counts.map(|c| c * (c - 1.0) / 2.0).sum::<f64>();
    let mut joint: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut ca: BTreeMap<usize, f64> = BTreeMap::new();
    let mut cb: BTreeMap<usize, f64> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1.0;
        *ca.entry(x).or_default() += 1.0;
        *cb.entry(y).or_default() += 1.0;
    }
    let same_both = pairs(&mut joint.into_values());
    let same_a = pairs(&mut ca.into_values());
    let same_b = pairs(&mut cb.into_values());
    let total = n * (n - 1.0) / 2.0;
    (total - same_a - same_b + 2.0 * same_both) / total
}

#[derive(Serialize)]
struct Timings {
    graph_seconds: f64,
    warmstart_seconds: f64,
    solve_seconds: f64,
    total_seconds: f64,
}

#[derive(Serialize)]
struct SolveReport {
    gamma: f64,
    solver: &'static str,
    converged: bool,
    primal_obj: f64,
    dual_obj: f64,
    kkt: KktResidual,
    eta_max: f64,
    outer_iters: usize,
    newton_iters: usize,
    cg_iters: usize,
    num_clusters: usize,
    rand_index: Option<f64>,
    num_edges: usize,
    timings: Timings,
}

#[derive(Serialize)]
struct AssignmentRow {
    index: usize,
    cluster: usize,
    label: Option<usize>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    tool_version: &'a str,
    argv: Vec<String>,
    dataset: &'a DatasetDescriptor,
    settings: serde_json::Value,
    threads: Option<usize>,
    parallel: bool,
    warnings: &'a [String],
    summary: serde_json::Value,
    files: Vec<String>,
}

fn write_manifest(
    out: &mut OutputDir,
    command: &str,
    dataset: &DatasetDescriptor,
    settings: serde_json::Value,
    threads: Option<usize>,
    warnings: &[String],
    summary: serde_json::Value,
) -> Result<(), CliError> {
    let mut files = out.files().to_vec();
    files.push("manifest.json".into());
    let manifest = Manifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        argv: std::env::args().collect(),
        dataset,
        settings,
        threads,
        parallel: sonclust::par::parallel_enabled(),
        warnings,
        summary,
        files,
    };
    out.write_json("manifest.json", &manifest)
}

fn assignment_rows(assignment: &[usize], labels: Option<&Vec<usize>>) -> Vec<AssignmentRow> {
    assignment
        .iter()
        .enumerate()
        .map(|(index, &cluster)| AssignmentRow { index, cluster, label: labels.map(|l| l[index]) })
        .collect()
}

fn cluster(x: &sonclust::Mat, graph: &sonclust::WeightedGraph, model: &ModelArgs) -> (Vec<usize>, usize) {
    if model.all_pairs_merge {
        extract_clusters_all_pairs(x, model.cluster_tol)
    } else {
        extract_clusters(x, graph, model.cluster_tol)
    }
}

pub fn cmd_solve(args: &SolveArgs, threads: Option<usize>) -> Result<Status, CliError> {
    let started = Instant::now();
    let loaded = load(&args.data)?;
    let model = &args.model;
    let cfg = solver_config(model);
    cfg.validate()?;
    let admm = AdmmConfig::default();

    let t = Instant::now();
    let graph = build_knn_graph(&loaded.data, model.knn, model.phi)?;
    let graph_seconds = t.elapsed().as_secs_f64();
    let problem = Problem::new(loaded.data.clone(), graph, args.gamma)?;

    let mut warmstart_seconds = 0.0;
    let result = match model.solver {
        SolverKind::Ssnal => {
            let init = if model.warmstart_iters > 0 {
                let t = Instant::now();
                let warm = iadmm_run(&problem, &admm, None, AdmmStop::Iterations(model.warmstart_iters))?;
                warmstart_seconds = t.elapsed().as_secs_f64();
                Some(warm.into_iterate())
            } else {
                None
            };
            solve(&problem, &cfg, init)?
        }
        SolverKind::Iadmm => iadmm_run(
            &problem,
            &admm,
            None,
            AdmmStop::Tolerance { tol: model.tol, max_iters: model.max_iters.unwrap_or(ADMM_MAX_ITERS) },
        )?,
    };
    let (assignment, num_clusters) = cluster(&result.x, problem.graph(), model);
    let report = SolveReport {
        gamma: args.gamma,
        solver: solver_name(model.solver),
        converged: result.converged,
        primal_obj: result.primal_obj,
        dual_obj: result.dual_obj,
        kkt: result.kkt,
        eta_max: result.kkt.max(),
        outer_iters: result.outer_iters,
        newton_iters: result.total_newton_iters,
        cg_iters: result.total_cg_iters,
        num_clusters,
        rand_index: loaded.labels.as_ref().map(|l| rand_index(&assignment, l)),
        num_edges: problem.num_edges(),
        timings: Timings {
            graph_seconds,
            warmstart_seconds,
            solve_seconds: result.seconds,
            total_seconds: started.elapsed().as_secs_f64(),
        },
    };

    let mut out = OutputDir::create(&args.out)?;
    out.write_json("result.json", &report)?;
    out.write_with("centroids.csv", |w| {
        datagen::write_csv(w, &result.x, Orientation::RowsAreObservations).map_err(CliError::from)
    })?;
    out.write_csv_records("assignment.csv", &assignment_rows(&assignment, loaded.labels.as_ref()))?;
    let settings = json!({
        "gamma": args.gamma,
        "knn": model.knn,
        "phi": model.phi,
        "solver": solver_name(model.solver),
        "solver_config": cfg,
        "admm_config": admm,
        "warmstart_iters": model.warmstart_iters,
        "max_iters": model.max_iters,
        "cluster_tol": model.cluster_tol,
        "all_pairs_merge": model.all_pairs_merge,
    });
    let summary = json!({
        "converged": report.converged,
        "primal_obj": report.primal_obj,
        "eta_max": report.eta_max,
        "num_clusters": num_clusters,
        "rand_index": report.rand_index,
    });
    write_manifest(&mut out, "solve", &loaded.descriptor, settings, threads, &loaded.warnings, summary)?;

    println!(
        "gamma {} solver {} converged {} objective {:.10e} eta {:.2e} clusters {} time {:.3}s",
        args.gamma,
        report.solver,
        report.converged,
        report.primal_obj,
        report.eta_max,
        num_clusters,
        report.timings.total_seconds
    );
    Ok(if result.converged {
        Status::Converged
    } else {
        Status::NotConverged(format!("KKT residual {:.3e} above tolerance {:.1e}", report.eta_max, model.tol))
    })
}

#[derive(Serialize)]
struct PathRecord<'a> {
    gamma: f64,
    num_clusters: usize,
    primal_obj: f64,
    eta_max: f64,
    eta_p: f64,
    eta_d: f64,
    eta: f64,
    converged: bool,
    outer_iters: usize,
    newton_iters: usize,
    cg_iters: usize,
    solve_seconds: f64,
    warmstart_seconds: f64,
    rand_index: Option<f64>,
    assignment: &'a [usize],
}

#[derive(Serialize)]
struct PathSummaryRow {
    gamma: f64,
    num_clusters: usize,
    primal_obj: f64,
    eta_max: f64,
    converged: bool,
    outer_iters: usize,
    newton_iters: usize,
    cg_iters: usize,
    solve_seconds: f64,
    warmstart_seconds: f64,
    rand_index: Option<f64>,
}

pub fn cmd_path(args: &PathArgs, threads: Option<usize>) -> Result<Status, CliError> {
    let model = &args.model;
    if model.solver != SolverKind::Ssnal {
        return Err(CliError::new("usage", "path supports --solver ssnal only"));
    }
    let grid = parse_gamma_grid(&args.gamma_grid)?;
    let loaded = load(&args.data)?;
    let mut config = PathConfig::new(grid);
    config.solver = solver_config(model);
    config.warm_start = !args.cold;
    config.warmstart_iters = model.warmstart_iters;
    config.cluster_tol = model.cluster_tol;
    config.all_pairs_merge = model.all_pairs_merge;
    config.validate()?;

    let t = Instant::now();
    let graph = build_knn_graph(&loaded.data, model.knn, model.phi)?;
    let graph_seconds = t.elapsed().as_secs_f64();
    let mut path = clustering_path_on_graph(Arc::new(loaded.data), Arc::new(graph), &config)?;
    path.graph_seconds = graph_seconds;

    let labels = loaded.labels.as_ref();
    let records: Vec<PathRecord> = path
        .points
        .iter()
        .map(|p| PathRecord {
            gamma: p.gamma,
            num_clusters: p.num_clusters,
            primal_obj: p.primal_obj,
            eta_max: p.kkt.max(),
            eta_p: p.kkt.eta_p,
            eta_d: p.kkt.eta_d,
            eta: p.kkt.eta,
            converged: p.converged,
            outer_iters: p.outer_iters,
            newton_iters: p.newton_iters,
            cg_iters: p.cg_iters,
            solve_seconds: p.solve_seconds,
            warmstart_seconds: p.warmstart_seconds,
            rand_index: labels.map(|l| rand_index(&p.assignment, l)),
            assignment: &p.assignment,
        })
        .collect();
    let rows: Vec<PathSummaryRow> = records
        .iter()
        .map(|r| PathSummaryRow {
            gamma: r.gamma,
            num_clusters: r.num_clusters,
            primal_obj: r.primal_obj,
            eta_max: r.eta_max,
            converged: r.converged,
            outer_iters: r.outer_iters,
            newton_iters: r.newton_iters,
            cg_iters: r.cg_iters,
            solve_seconds: r.solve_seconds,
            warmstart_seconds: r.warmstart_seconds,
            rand_index: r.rand_index,
        })
        .collect();

    let mut out = OutputDir::create(&args.out)?;
    out.write_jsonl("path.jsonl", &records)?;
    out.write_csv_records("path_summary.csv", &rows)?;
    let settings = json!({
        "gamma_grid": config.gamma_grid,
        "knn": model.knn,
        "phi": model.phi,
        "warm_start": config.warm_start,
        "solver_config": config.solver,
        "admm_config": config.admm,
        "warmstart_iters": config.warmstart_iters,
        "cluster_tol": config.cluster_tol,
        "all_pairs_merge": config.all_pairs_merge,
    });
    let summary = json!({
        "points": records.len(),
        "all_converged": path.all_converged(),
        "failure": path.failure,
        "num_edges": path.num_edges,
        "graph_seconds": path.graph_seconds,
        "total_solve_seconds": rows.iter().map(|r| r.solve_seconds + r.warmstart_seconds).sum::<f64>(),
    });
    write_manifest(&mut out, "path", &loaded.descriptor, settings, threads, &loaded.warnings, summary)?;

    println!(
        "{} grid points, {} converged, clusters {} -> {}",
        records.len(),
        records.iter().filter(|r| r.converged).count(),
        records.first().map_or(0, |r| r.num_clusters),
        records.last().map_or(0, |r| r.num_clusters)
    );
    if let Some(f) = &path.failure {
        return Err(CliError::new("numerical-failure", format!("solve failed at gamma {}: {}", f.gamma, f.message)));
    }
    Ok(if path.all_converged() {
        Status::Converged
    } else {
        let bad: Vec<f64> = records.iter().filter(|r| !r.converged).map(|r| r.gamma).collect();
        Status::NotConverged(format!("no convergence at gamma {bad:?}"))
    })
}

pub fn cmd_bench(args: &BenchArgs, threads: Option<usize>) -> Result<Status, CliError> {
    let mut settings = BenchSettings {
        sizes: args.sizes.clone(),
        ks: args.ks.clone(),
        fixed_n: args.n,
        knn: args.knn,
        phi: args.phi,
        reps: args.reps,
        seed: args.seed,
        warmstart_iters: args.warmstart_iters,
        ..BenchSettings::default()
    };
    settings.solver = SolverConfig::default().with_tol(args.tol);
    settings.solver.newton.linear_solver = linear_solver(args.linear_solver);
    if let Some(text) = &args.gamma_grid {
        let grid = parse_gamma_grid(text)?;
        match args.suite {
            Suite::GammaSensitivity => settings.sensitivity_grid = grid,
            _ => settings.scaling_grid = grid,
        }
    }
    if settings.reps == 0 {
        return Err(CliError::new("usage", "--reps must be at least 1"));
    }
    settings.solver.validate()?;

    let (name, rows) = match args.suite {
        Suite::ScalingN => ("scaling-n", experiments::scaling_n(&settings)?),
        Suite::ScalingK => ("scaling-k", experiments::scaling_k(&settings)?),
        Suite::GammaSensitivity => ("gamma-sensitivity", experiments::gamma_sensitivity(&settings)?),
    };
    let summary = bench_summary(args.suite, &rows);

    let mut out = OutputDir::create(&args.out)?;
    out.write_csv_records("bench.csv", &rows)?;
    let descriptor = DatasetDescriptor {
        name: "two_half_moons".into(),
        seed: Some(settings.seed),
        n: match args.suite {
            Suite::ScalingN => settings.sizes.iter().copied().max().unwrap_or(0),
            _ => settings.fixed_n,
        },
        d: 2,
        params: BTreeMap::from([("noise_sd".to_string(), settings.noise_sd)]),
    };
    let settings_json = json!({ "suite": name, "bench": settings });
    write_manifest(&mut out, "bench", &descriptor, settings_json, threads, &[], summary.clone())?;

    println!("{name}: {summary}");
    Ok(if rows.iter().all(|r| r.converged) {
        Status::Converged
    } else {
        Status::NotConverged(format!("{name}: some solves did not converge"))
    })
}

fn bench_summary(suite: Suite, rows: &[BenchRow]) -> serde_json::Value {
    let fit = |key: fn(&BenchRow) -> f64| {
        let means = mean_seconds_by(rows, key);
        let (xs, ys): (Vec<f64>, Vec<f64>) = means.iter().copied().unzip();
        let slope = loglog_slope(&xs, &ys).ok();
        json!({ "mean_seconds": means, "loglog_slope": slope })
    };
    match suite {
        Suite::ScalingN => fit(|r| r.n as f64),
        Suite::ScalingK => fit(|r| r.k as f64),
        Suite::GammaSensitivity => {
            let mut t: Vec<f64> = rows.iter().map(|r| r.seconds).collect();
            t.sort_by(f64::total_cmp);
            let median = t.get(t.len() / 2).copied().unwrap_or(0.0);
            let max = t.last().copied().unwrap_or(0.0);
            let ratio = if median > 0.0 { Some(max / median) } else { None };
            json!({ "median_seconds": median, "max_seconds": max, "max_over_median": ratio })
        }
    }
}
