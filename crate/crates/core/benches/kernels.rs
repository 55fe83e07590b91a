//! Parallel versus sequential execution of the core kernels.
//!
//! Every benchmark runs twice, once with the rayon path enabled and once
//! with it switched off at runtime. Without the `parallel` feature both
//! variants take the sequential path.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sonclust::datagen::two_half_moons;
use sonclust::par::set_parallel;
use sonclust::prox::prox_p;
use sonclust::ssncg::{jacobian_vector_product, select_jacobian};
use sonclust::{build_knn_graph, solve, DataMatrix, Mat, Problem, SolverConfig, WeightedGraph};

const MODES: [(&str, bool); 2] = [("parallel", true), ("sequential", false)];

fn moons(n: usize) -> (DataMatrix, WeightedGraph) {
    let ds = two_half_moons(n, 0.1, 1).expect("valid size");
    let graph = build_knn_graph(&ds.data, 10, 0.5).expect("valid graph");
    (ds.data, graph)
}

fn difference_operators(c: &mut Criterion) {
    let mut group = c.benchmark_group("difference");
    for n in [2_000, 20_000] {
        let (a, graph) = moons(n);
        let z = graph.apply_b(&a).unwrap();
        for (mode, on) in MODES {
            set_parallel(on);
            group.bench_with_input(BenchmarkId::new(format!("B/{mode}"), n), &n, |b, _| {
                b.iter(|| black_box(graph.apply_b(&a).unwrap()))
            });
            group.bench_with_input(BenchmarkId::new(format!("Bt/{mode}"), n), &n, |b, _| {
                b.iter(|| black_box(graph.apply_b_adjoint(&z).unwrap()))
            });
        }
    }
    set_parallel(true);
    group.finish();
}

fn newton_kernels(c: &mut Criterion) {
    let mut group = c.benchmark_group("newton");
    for n in [2_000, 20_000] {
        let (a, graph) = moons(n);
        let problem = Problem::new(a.clone(), graph, 1.0).unwrap();
        let x = a.scaled(0.9);
        let z = Mat::zeros(2, problem.num_edges());
        let info = select_jacobian(&x, &z, 10.0, &problem).unwrap();
        let u = problem.graph().apply_b(&x).unwrap();
        for (mode, on) in MODES {
            set_parallel(on);
            group.bench_with_input(BenchmarkId::new(format!("jvp/{mode}"), n), &n, |b, _| {
                b.iter(|| black_box(jacobian_vector_product(&info, &x).unwrap()))
            });
            group.bench_with_input(BenchmarkId::new(format!("prox/{mode}"), n), &n, |b, _| {
                b.iter(|| black_box(prox_p(&u, 0.1, problem.spec()).unwrap()))
            });
        }
    }
    set_parallel(true);
    group.finish();
}

fn graph_construction(c: &mut Criterion) {
    let mut group = c.benchmark_group("knn");
    group.sample_size(10);
    let data = two_half_moons(4_000, 0.1, 1).unwrap().data;
    for (mode, on) in MODES {
        set_parallel(on);
        group.bench_function(mode, |b| b.iter(|| black_box(build_knn_graph(&data, 10, 0.5).unwrap())));
    }
    set_parallel(true);
    group.finish();
}

fn full_solve(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve");
    group.sample_size(10);
    let (a, graph) = moons(1_000);
    let problem = Problem::new(a, graph, 2.0).unwrap();
    let config = SolverConfig::default();
    for (mode, on) in MODES {
        set_parallel(on);
        group.bench_function(mode, |b| b.iter(|| black_box(solve(&problem, &config, None).unwrap())));
    }
    set_parallel(true);
    group.finish();
}

criterion_group!(benches, difference_operators, newton_kernels, graph_construction, full_solve);
criterion_main!(benches);
