//! End-to-end solver behavior against closed forms and an independent dual
//! oracle.

mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sonclust::iadmm::{self, x_system_solve};
use sonclust::linalg::Mat;
use sonclust::ssnal::{self, primal_objective, update_sigma};
use sonclust::{iadmm_run, solve, AdmmConfig, AdmmStop, LinearSolver, Problem, SolverConfig, WeightedGraph};

fn tight() -> SolverConfig {
    SolverConfig::default().with_tol(1e-10)
}

fn random_problem(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Problem {
    let graph = random_graph(rng, n);
    let a = gaussian_mat(rng, d, n, 1.0);
    let gamma = rng.random_range(0.02..0.6);
    Problem::new(a, graph, gamma).unwrap()
}

#[test]
fn two_points_follow_the_closed_form() {
    // Points 5 apart; each moves gamma toward the other until they fuse at
    // gamma = 2.5.
    let a = Mat::from_col_major(2, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
    for gamma in [0.1, 1.0, 2.0, 2.4, 2.6, 10.0] {
        let p = Problem::new(a.clone(), WeightedGraph::complete(2), gamma).unwrap();
        let res = solve(&p, &tight(), None).unwrap();
        assert!(res.converged, "gamma {gamma}");
        let shift = gamma.min(2.5) / 5.0;
        let expect = [3.0 * shift, 4.0 * shift, 3.0 * (1.0 - shift), 4.0 * (1.0 - shift)];
        for (x, e) in res.x.as_slice().iter().zip(expect) {
            assert!((x - e).abs() < 1e-8, "gamma {gamma}: {x} vs {e}");
        }
    }
}

#[test]
fn large_gamma_collapses_to_the_mean_on_a_connected_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 15;
    let graph = random_graph(&mut rng, n);
    let a = gaussian_mat(&mut rng, 3, n, 1.0);
    let p = Problem::new(a.clone(), graph, 1e3).unwrap();
    let res = solve(&p, &tight(), None).unwrap();
    assert!(res.converged);
    for r in 0..3 {
        let mean: f64 = (0..n).map(|j| a.col(j)[r]).sum::<f64>() / n as f64;
        for j in 0..n {
            assert!((res.x.col(j)[r] - mean).abs() < 1e-7);
        }
    }
}

#[test]
fn vanishing_gamma_returns_the_data() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let graph = random_graph(&mut rng, 10);
    let a = gaussian_mat(&mut rng, 2, 10, 1.0);
    let p = Problem::new(a.clone(), graph, 1e-12).unwrap();
    let res = solve(&p, &tight(), None).unwrap();
    assert!(res.x.dist(&a) < 1e-9);
}

#[test]
fn solutions_match_the_dual_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..12 {
        let n = rng.random_range(4..14);
        let d = rng.random_range(1..4);
        let p = random_problem(&mut rng, n, d);
        let (xo, _, gap_o) = dual_oracle(p.data(), p.graph(), p.gamma(), 30_000);
        assert!(gap_o < 1e-9, "oracle did not converge: gap {gap_o:e}");
        for solver in [LinearSolver::Cg, LinearSolver::Direct] {
            let mut cfg = tight();
            cfg.newton.linear_solver = solver;
            let res = solve(&p, &cfg, None).unwrap();
            assert!(res.converged, "trial {trial}");
            // 1-strong convexity: 1/2 ||X - X*||^2 <= P(X) - P* <= P(X) - D(Z_oracle).
            let po = reference_primal(&xo, p.data(), p.graph(), p.gamma());
            let ps = reference_primal(&res.x, p.data(), p.graph(), p.gamma());
            let bound = (2.0 * (ps - po + gap_o).max(0.0)).sqrt() + (2.0 * gap_o).sqrt();
            let dist = res.x.dist(&xo);
            assert!(dist <= bound.max(1e-6), "trial {trial}: dist {dist:e} bound {bound:e}");
            assert!((ps - po).abs() <= 1e-7 * (1.0 + po.abs()), "trial {trial}: {ps} vs {po}");
        }
    }
}

#[test]
fn reported_objectives_are_consistent() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let p = random_problem(&mut rng, 12, 2);
        let res = solve(&p, &tight(), None).unwrap();
        let reference = reference_primal(&res.x, p.data(), p.graph(), p.gamma());
        assert!((res.primal_obj - reference).abs() <= 1e-12 * (1.0 + reference));
        assert!((primal_objective(&res.x, &p).unwrap() - reference).abs() <= 1e-12 * (1.0 + reference));
        // Weak duality with a small certified gap.
        assert!(res.dual_obj <= res.primal_obj + 1e-12 * (1.0 + res.primal_obj));
        assert!(res.primal_obj - res.dual_obj <= 1e-7 * (1.0 + res.primal_obj));
        assert!(res.kkt.max() <= 1e-10);
        // V = B*(Z) recovers A - X.
        assert!(res.v.dist(&p.data().sub(&res.x)) <= 1e-8 * (1.0 + p.data_norm()));
    }
}

#[test]
fn admm_and_ssnal_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..6 {
        let p = random_problem(&mut rng, 12, 2);
        let ssnal = solve(&p, &tight(), None).unwrap();
        let admm =
            iadmm_run(&p, &AdmmConfig::default(), None, AdmmStop::Tolerance { tol: 1e-8, max_iters: 50_000 }).unwrap();
        assert!(admm.converged);
        let rel = (admm.primal_obj - ssnal.primal_obj).abs() / (1.0 + ssnal.primal_obj);
        assert!(rel <= 1e-6, "{} vs {}", admm.primal_obj, ssnal.primal_obj);
        assert!(admm.x.dist(&ssnal.x) <= 1e-3 * (1.0 + ssnal.x.norm()));
    }
}

#[test]
fn optimum_does_not_depend_on_the_start() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = random_problem(&mut rng, 14, 3);
    let cold = solve(&p, &tight(), None).unwrap();
    let warm_admm = iadmm_run(&p, &AdmmConfig::default(), None, AdmmStop::Iterations(50)).unwrap();
    let from_admm = solve(&p, &tight(), Some(warm_admm.into_iterate())).unwrap();
    let mut odd = p.default_start();
    odd.x = gaussian_mat(&mut rng, p.d(), p.n(), 3.0);
    odd.z = gaussian_mat(&mut rng, p.d(), p.num_edges(), 1.0);
    let from_odd = solve(&p, &tight(), Some(odd)).unwrap();
    for other in [&from_admm, &from_odd] {
        assert!(other.converged);
        assert!(other.x.dist(&cold.x) <= 1e-7 * (1.0 + cold.x.norm()));
    }
}

#[test]
fn relabeling_nodes_permutes_the_solution() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 12;
    let graph = random_graph(&mut rng, n);
    let a = gaussian_mat(&mut rng, 2, n, 1.0);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    // Node v of the original becomes node perm[v].
    let mut pa = Mat::zeros(2, n);
    for (v, &pv) in perm.iter().enumerate() {
        pa.col_mut(pv).copy_from_slice(a.col(v));
    }
    let triples: Vec<_> =
        graph.edges().iter().zip(graph.weights()).map(|(&(i, j), &w)| (perm[i], perm[j], w)).collect();
    let pg = WeightedGraph::from_weighted_edges(n, &triples).unwrap();
    let x = solve(&Problem::new(a, graph, 0.3).unwrap(), &tight(), None).unwrap().x;
    let px = solve(&Problem::new(pa, pg, 0.3).unwrap(), &tight(), None).unwrap().x;
    for (v, &pv) in perm.iter().enumerate() {
        for (p, q) in x.col(v).iter().zip(px.col(pv)) {
            assert!((p - q).abs() < 1e-8);
        }
    }
}

#[test]
fn sigma_never_decreases_and_respects_the_cap() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cfg = tight();
    for _ in 0..5 {
        let p = random_problem(&mut rng, 15, 2);
        let res = solve(&p, &cfg, None).unwrap();
        let sigmas: Vec<f64> = res.trace.iter().map(|s| s.sigma).collect();
        assert!(sigmas.windows(2).all(|w| w[1] >= w[0]));
        assert!(sigmas.iter().all(|s| *s <= cfg.sigma_max));
    }
    for (now, prev) in [(1.0, 1.0), (0.4, 1.0), (0.6, 1.0), (0.0, 0.0)] {
        let s = update_sigma(5.0, now, prev, &cfg);
        assert!(s >= 5.0 && s <= cfg.sigma_max);
    }
}

#[test]
fn objective_lies_between_fusion_and_identity() {
    // P(X*) <= P(A) = penalty at A, and P(X*) >= 0.
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let p = random_problem(&mut rng, 10, 2);
        let res = solve(&p, &tight(), None).unwrap();
        let at_data = reference_primal(p.data(), p.data(), p.graph(), p.gamma());
        assert!(res.primal_obj >= 0.0);
        assert!(res.primal_obj <= at_data + 1e-12);
    }
}

#[test]
fn warm_start_from_the_optimum_needs_no_newton_steps() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let p = random_problem(&mut rng, 12, 2);
    let cfg = SolverConfig::default();
    let first = solve(&p, &cfg, None).unwrap();
    let again = solve(&p, &cfg, Some(first.iterate())).unwrap();
    assert!(again.converged);
    assert!(again.total_newton_iters <= 1);
}

#[test]
fn x_system_matches_dense_solve() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let n = rng.random_range(3..15);
        let graph = random_graph(&mut rng, n);
        let r = gaussian_mat(&mut rng, 2, n, 1.0);
        let sigma = rng.random_range(0.1..5.0);
        let (x, out) = x_system_solve(&graph, sigma, &r, 1e-12, 1000).unwrap();
        assert!(out.converged);
        let inc = dense_incidence(&graph);
        // Weights enter through the radii only, so the system uses B*B.
        let lap = inc.transpose() * &inc;
        let sys = nalgebra::DMatrix::identity(n, n) + lap * sigma;
        // Rows of X solve (I + sigma L) x^T = r^T.
        let exact = to_dmatrix(&r) * sys.try_inverse().unwrap();
        assert!(x.dist(&from_dmatrix(&exact)) <= 1e-9);
    }
}

#[test]
fn admm_optimum_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let p = random_problem(&mut rng, 10, 2);
    let opt = solve(&p, &tight(), None).unwrap();
    let again = iadmm_run(&p, &AdmmConfig::default(), Some(opt.iterate()), AdmmStop::Iterations(20)).unwrap();
    assert!(again.x.dist(&opt.x) <= 1e-6 * (1.0 + opt.x.norm()));
    assert!(again.kkt.max() <= 1e-6);
}

#[test]
fn invalid_inputs_are_rejected() {
    let a = Mat::zeros(2, 3);
    let g = WeightedGraph::complete(3);
    assert!(Problem::new(a.clone(), g.clone(), -1.0).is_err());
    assert!(Problem::new(a.clone(), g.clone(), f64::NAN).is_err());
    assert!(Problem::new(Mat::zeros(2, 4), g.clone(), 1.0).is_err());
    let p = Problem::new(a, g, 1.0).unwrap();
    let mut bad = p.default_start();
    bad.x = Mat::zeros(3, 3);
    assert!(solve(&p, &SolverConfig::default(), Some(bad)).is_err());
    assert!(ssnal::kkt_residuals(&Mat::zeros(1, 1), &p.default_start().u, &p.default_start().z, &p).is_err());
    assert!(AdmmConfig { tau_step: 2.0, ..AdmmConfig::default() }.validate().is_err());
    const { assert!(iadmm::GOLDEN_RATIO > 1.618) };
}
