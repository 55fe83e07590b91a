//! Inexact augmented Lagrangian outer loop for
//!
//! ```text
//! min_{X,U}  1/2 ||X - A||^2 + p(U)   s.t.  B(X) - U = 0
//! ```
//!
//! Each outer iteration minimizes the augmented Lagrangian over `(X, U)` with
//! the semismooth Newton-CG solver in [`crate::ssncg`], then takes a
//! multiplier step `Z <- Z + sigma (B(X) - U)` and possibly enlarges `sigma`.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use serde::Serialize;

use crate::direct::NewtonPattern;
use crate::error::{shape_err, Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::{norm2, DataMatrix, EdgeMatrix, Mat};
use crate::prox::{prox_p, WeightedNormSpec};
use crate::ssncg::{self, NewtonConfig};

/// One instance of the weighted sum-of-norms clustering problem.
#[derive(Clone, Debug)]
pub struct Problem {
    a: Arc<DataMatrix>,
    graph: Arc<WeightedGraph>,
    spec: WeightedNormSpec,
    a_norm: f64,
    // Built on first use, shared by `with_gamma` copies.
    pattern: Arc<OnceLock<std::result::Result<Arc<NewtonPattern>, String>>>,
}

impl Problem {
    pub fn new(a: DataMatrix, graph: WeightedGraph, gamma: f64) -> Result<Self> {
        Self::from_shared(Arc::new(a), Arc::new(graph), gamma)
    }

    pub fn from_shared(a: Arc<DataMatrix>, graph: Arc<WeightedGraph>, gamma: f64) -> Result<Self> {
        if a.rows() == 0 || a.cols() == 0 {
            return Err(Error::Parameter("data matrix must be at least 1 x 1".into()));
        }
        if !a.is_finite() {
            return Err(Error::Parameter("data matrix has non-finite entries".into()));
        }
        if graph.n() != a.cols() {
            return Err(shape_err("Problem::new", format!("graph on {} nodes", a.cols()), graph.n()));
        }
        let spec = WeightedNormSpec::new(gamma, graph.weights())?;
        let a_norm = a.norm();
        Ok(Self { a, graph, spec, a_norm, pattern: Arc::new(OnceLock::new()) })
    }

    /// Same data and graph, different regularization weight.
    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        let mut p = Self::from_shared(self.a.clone(), self.graph.clone(), gamma)?;
        p.pattern = self.pattern.clone();
        Ok(p)
    }

    /// Sparsity pattern and symbolic factorization of the Newton system.
    pub fn newton_pattern(&self) -> Result<Arc<NewtonPattern>> {
        self.pattern
            .get_or_init(|| NewtonPattern::new(&self.graph, self.d()).map(Arc::new).map_err(|e| e.to_string()))
            .clone()
            .map_err(Error::NumericalFailure)
    }

    pub fn data(&self) -> &DataMatrix {
        &self.a
    }

    pub fn graph(&self) -> &WeightedGraph {
        &self.graph
    }

    pub fn spec(&self) -> &WeightedNormSpec {
        &self.spec
    }

    pub fn gamma(&self) -> f64 {
        self.spec.gamma()
    }

    pub fn d(&self) -> usize {
        self.a.rows()
    }

    pub fn n(&self) -> usize {
        self.a.cols()
    }

    pub fn num_edges(&self) -> usize {
        self.graph.num_edges()
    }

    /// `||A||` (Frobenius), used by the relative residuals.
    pub fn data_norm(&self) -> f64 {
        self.a_norm
    }

    /// Cold-start point `X = A`, `U = B(A)`, `Z = 0`.
    pub fn default_start(&self) -> Iterate {
        let x = (*self.a).clone();
        let u = self.graph.apply_b(&x).expect("data matches graph");
        let z = Mat::zeros(self.d(), self.num_edges());
        Iterate { x, u, z }
    }

    pub(crate) fn check_iterate(&self, it: &Iterate) -> Result<()> {
        let (d, n, m) = (self.d(), self.n(), self.num_edges());
        if it.x.shape() != (d, n) {
            return Err(shape_err("iterate X", format!("{d}x{n}"), format!("{:?}", it.x.shape())));
        }
        for (name, mat) in [("iterate U", &it.u), ("iterate Z", &it.z)] {
            if mat.shape() != (d, m) {
                return Err(shape_err(name, format!("{d}x{m}"), format!("{:?}", mat.shape())));
            }
        }
        Ok(())
    }
}

/// Primal-dual point `(X, U, Z)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Iterate {
    pub x: Mat,
    pub u: EdgeMatrix,
    pub z: EdgeMatrix,
}

impl Iterate {
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.u.is_finite() && self.z.is_finite()
    }
}

/// Outer-loop settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Target for `max(eta_P, eta_D, eta)`.
    pub tol: f64,
    pub sigma0: f64,
    pub sigma_max: f64,
    /// Factor applied to `sigma` when the primal residual stalls.
    pub sigma_growth: f64,
    /// Subproblem accuracy sequence `eps_k = eps0 * eps_decay^k`.
    pub eps0: f64,
    pub eps_decay: f64,
    pub max_outer: usize,
    pub newton: NewtonConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            sigma0: 1.0,
            sigma_max: 1e6,
            sigma_growth: 3.0,
            eps0: 1.0,
            eps_decay: 0.5,
            max_outer: 100,
            newton: NewtonConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if !(self.tol > 0.0) {
            return bad("tol must be positive");
        }
        if !(self.sigma0 > 0.0) || !(self.sigma_max >= self.sigma0) {
            return bad("need 0 < sigma0 <= sigma_max");
        }
        if !(self.sigma_growth >= 1.0) {
            return bad("sigma_growth must be >= 1");
        }
        if !(self.eps0 >= 0.0) || !(self.eps_decay > 0.0 && self.eps_decay < 1.0) {
            return bad("need eps0 >= 0 and eps_decay in (0, 1)");
        }
        self.newton.validate()
    }
}

/// Relative KKT residuals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct KktResidual {
    pub eta_p: f64,
    pub eta_d: f64,
    pub eta: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.eta_p.max(self.eta_d).max(self.eta)
    }

    pub fn is_finite(&self) -> bool {
        self.eta_p.is_finite() && self.eta_d.is_finite() && self.eta.is_finite()
    }
}

/// Per-outer-iteration record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OuterStep {
    pub sigma: f64,
    pub eps: f64,
    pub kkt: KktResidual,
    pub primal_obj: f64,
    pub newton_iters: usize,
    pub cg_iters: usize,
    pub subproblem_converged: bool,
}

/// Output of [`solve`] and [`crate::iadmm::iadmm_run`].
#[derive(Clone, Debug)]
pub struct SolveResult {
    pub x: Mat,
    pub u: EdgeMatrix,
    pub z: EdgeMatrix,
    /// `B*(Z)`, which equals `A - X` at optimality.
    pub v: Mat,
    pub kkt: KktResidual,
    pub primal_obj: f64,
    /// Dual objective at the projection of `Z` onto the feasible set.
    pub dual_obj: f64,
    pub outer_iters: usize,
    pub total_newton_iters: usize,
    pub total_cg_iters: usize,
    pub converged: bool,
    pub seconds: f64,
    pub trace: Vec<OuterStep>,
}

impl SolveResult {
    pub fn iterate(&self) -> Iterate {
        Iterate { x: self.x.clone(), u: self.u.clone(), z: self.z.clone() }
    }

    pub fn into_iterate(self) -> Iterate {
        Iterate { x: self.x, u: self.u, z: self.z }
    }

    pub(crate) fn assemble(
        problem: &Problem,
        it: Iterate,
        kkt: KktResidual,
        counters: (usize, usize, usize),
        converged: bool,
        started: Instant,
        trace: Vec<OuterStep>,
    ) -> Result<Self> {
        let v = problem.graph().apply_b_adjoint(&it.z)?;
        let primal_obj = primal_objective(&it.x, problem)?;
        let zp = crate::prox::project_omega(&it.z, problem.spec())?;
        let dual_obj = dual_objective(&zp, problem)?;
        Ok(Self {
            x: it.x,
            u: it.u,
            z: it.z,
            v,
            kkt,
            primal_obj,
            dual_obj,
            outer_iters: counters.0,
            total_newton_iters: counters.1,
            total_cg_iters: counters.2,
            converged,
            seconds: started.elapsed().as_secs_f64(),
            trace,
        })
    }
}

/// Criterion (A) surrogate: `||grad phi_k|| <= eps_k / max(1, sqrt(sigma_k))`.
pub fn subproblem_tolerance_met(grad_norm: f64, eps_k: f64, sigma_k: f64) -> bool {
    grad_norm <= eps_k / sigma_k.sqrt().max(1.0)
}

/// `eta_P = ||B X - U|| / (1 + ||U||)`,
/// `eta_D = sum_e max(0, ||Z_e|| - gamma w_e) / (1 + ||A||)`,
/// `eta = (||B* Z + X - A|| + ||U - Prox_p(U + Z)||) / (1 + ||A|| + ||U||)`.
pub fn kkt_residuals(x: &Mat, u: &EdgeMatrix, z: &EdgeMatrix, problem: &Problem) -> Result<KktResidual> {
    problem.data().check_shape(x, "kkt_residuals X")?;
    let g = problem.graph();
    let bx = g.apply_b(x)?;
    u.check_shape(&bx, "kkt_residuals U")?;
    z.check_shape(&bx, "kkt_residuals Z")?;
    let u_norm = u.norm();
    let eta_p = bx.dist(u) / (1.0 + u_norm);

    let radii = problem.spec().radii();
    let excess: f64 = z.columns().zip(radii).map(|(c, r)| (norm2(c) - r).max(0.0)).sum();
    let eta_d = excess / (1.0 + problem.data_norm());

    let mut stat = g.apply_b_adjoint(z)?;
    stat.axpy(1.0, x);
    stat.axpy(-1.0, problem.data());
    let upz = u.add(z);
    let fixed = prox_p(&upz, 1.0, problem.spec())?;
    let eta = (stat.norm() + u.dist(&fixed)) / (1.0 + problem.data_norm() + u_norm);
    Ok(KktResidual { eta_p, eta_d, eta })
}

/// `1/2 sum_i ||x_i - a_i||^2 + gamma sum_e w_e ||x_i - x_j||`.
pub fn primal_objective(x: &Mat, problem: &Problem) -> Result<f64> {
    let a = problem.data();
    a.check_shape(x, "primal_objective")?;
    let fit = 0.5 * x.dist(a).powi(2);
    let bx = problem.graph().apply_b(x)?;
    Ok(fit + problem.spec().value(&bx)?)
}

/// Dual objective `<A, V> - 1/2 ||V||^2` with `V = B*(Z)`. `Z` must lie in
/// the dual feasible set up to an absolute slack of `1e-9` per column.
pub fn dual_objective(z: &EdgeMatrix, problem: &Problem) -> Result<f64> {
    if z.shape() != (problem.d(), problem.num_edges()) {
        return Err(shape_err(
            "dual_objective",
            format!("{}x{}", problem.d(), problem.num_edges()),
            format!("{}x{}", z.rows(), z.cols()),
        ));
    }
    for (e, (c, r)) in z.columns().zip(problem.spec().radii()).enumerate() {
        let norm = norm2(c);
        if norm > r + 1e-9 {
            return Err(Error::Infeasible { edge: e, norm, bound: *r });
        }
    }
    let v = problem.graph().apply_b_adjoint(z)?;
    Ok(problem.data().dot(&v) - 0.5 * v.norm_sq())
}

/// Grows `sigma` by `sigma_growth` (capped at `sigma_max`) unless the primal
/// residual at least halved since the previous outer iteration.
pub fn update_sigma(sigma_k: f64, eta_p_now: f64, eta_p_prev: f64, config: &SolverConfig) -> f64 {
    if eta_p_now > 0.5 * eta_p_prev {
        (config.sigma_growth * sigma_k).min(config.sigma_max).max(sigma_k)
    } else {
        sigma_k
    }
}

/// Runs the augmented Lagrangian method from `init` (or the cold start
/// `X = A, U = B(A), Z = 0`).
pub fn solve(problem: &Problem, config: &SolverConfig, init: Option<Iterate>) -> Result<SolveResult> {
    config.validate()?;
    let started = Instant::now();
    let mut it = match init {
        Some(it) => {
            problem.check_iterate(&it)?;
            it
        }
        None => problem.default_start(),
    };
    if !it.is_finite() {
        return Err(Error::Parameter("initial point has non-finite entries".into()));
    }

    let mut kkt = kkt_residuals(&it.x, &it.u, &it.z, problem)?;
    let mut trace = Vec::new();
    let (mut newton_total, mut cg_total) = (0, 0);
    if kkt.max() <= config.tol {
        return SolveResult::assemble(problem, it, kkt, (0, 0, 0), true, started, trace);
    }

    let graph = problem.graph();
    let mut sigma = config.sigma0;
    let mut eta_p_prev = kkt.eta_p;
    let mut outer = 0;
    let mut converged = false;
    let mut bx = Mat::zeros(problem.d(), problem.num_edges());
    while outer < config.max_outer {
        let eps_k = config.eps0 * config.eps_decay.powi(outer as i32);
        let sub = match ssncg::solve_subproblem(&it.x, &it.z, sigma, problem, &config.newton, eps_k) {
            Ok(sub) => sub,
            Err(Error::NumericalFailure(message)) => {
                return Err(Error::Diverged { message, last_finite: Some(Box::new(it)) })
            }
            Err(e) => return Err(e),
        };
        outer += 1;
        newton_total += sub.newton_iters;
        cg_total += sub.cg_iters;

        let last = it.clone();
        it.x = sub.x;
        it.u = sub.u;
        graph.apply_b_into(&it.x, &mut bx)?;
        let mut step = bx.sub(&it.u);
        step.scale(sigma);
        it.z.axpy(1.0, &step);

        if !it.is_finite() {
            return Err(Error::Diverged {
                message: format!("non-finite iterate at outer iteration {outer}"),
                last_finite: Some(Box::new(last)),
            });
        }
        kkt = kkt_residuals(&it.x, &it.u, &it.z, problem)?;
        trace.push(OuterStep {
            sigma,
            eps: eps_k,
            kkt,
            primal_obj: primal_objective(&it.x, problem)?,
            newton_iters: sub.newton_iters,
            cg_iters: sub.cg_iters,
            subproblem_converged: sub.converged,
        });
        log::debug!(
            "ssnal outer {outer}: sigma={sigma:.3e} etaP={:.2e} etaD={:.2e} eta={:.2e} newton={} cg={}",
            kkt.eta_p,
            kkt.eta_d,
            kkt.eta,
            sub.newton_iters,
            sub.cg_iters
        );
        if kkt.max() <= config.tol {
            converged = true;
            break;
        }
        sigma = update_sigma(sigma, kkt.eta_p, eta_p_prev, config);
        eta_p_prev = kkt.eta_p;
    }

    SolveResult::assemble(problem, it, kkt, (outer, newton_total, cg_total), converged, started, trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_point(gamma: f64) -> Problem {
        let a = Mat::from_col_major(2, 2, vec![0.0, 0.0, 3.0, 4.0]).unwrap();
        Problem::new(a, WeightedGraph::complete(2), gamma).unwrap()
    }

    #[test]
    fn subproblem_tolerance_examples() {
        assert!(subproblem_tolerance_met(0.0, 0.0, 10.0));
        assert!(subproblem_tolerance_met(0.49, 1.0, 4.0));
        assert!(!subproblem_tolerance_met(0.51, 1.0, 4.0));
        assert!(subproblem_tolerance_met(0.99, 1.0, 0.25));
    }

    #[test]
    fn sigma_rule_examples() {
        let cfg = SolverConfig::default();
        assert_eq!(update_sigma(2.0, 0.9, 1.0, &cfg), 6.0);
        assert_eq!(update_sigma(2.0, 0.5, 1.0, &cfg), 2.0);
        assert_eq!(update_sigma(cfg.sigma_max, 1.0, 1.0, &cfg), cfg.sigma_max);
        assert_eq!(update_sigma(0.9 * cfg.sigma_max, 1.0, 1.0, &cfg), cfg.sigma_max);
    }

    #[test]
    fn residuals_at_feasible_start() {
        let p = two_point(1.0);
        let it = p.default_start();
        let kkt = kkt_residuals(&it.x, &it.u, &it.z, &p).unwrap();
        assert_eq!(kkt.eta_p, 0.0);
        assert_eq!(kkt.eta_d, 0.0);
        // X = A so stationarity vanishes; U = (-3,-4) shrinks by 1 to norm 4.
        let expect = 1.0 / (1.0 + 5.0 + 5.0);
        assert!((kkt.eta - expect).abs() < 1e-15);
    }

    #[test]
    fn residuals_vanish_at_the_closed_form_optimum() {
        // Distance 5 > 2 gamma: each point moves gamma toward the other.
        let p = two_point(1.0);
        let x = Mat::from_col_major(2, 2, vec![0.6, 0.8, 2.4, 3.2]).unwrap();
        let u = p.graph().apply_b(&x).unwrap();
        let z = Mat::from_col_major(2, 1, vec![-0.6, -0.8]).unwrap();
        let kkt = kkt_residuals(&x, &u, &z, &p).unwrap();
        assert!(kkt.max() < 1e-15, "{kkt:?}");
    }

    #[test]
    fn objective_examples() {
        let p = two_point(2.0);
        assert_eq!(primal_objective(p.data(), &p).unwrap(), 10.0);
        let x = Mat::from_col_major(2, 2, vec![1.5, 2.0, 1.5, 2.0]).unwrap();
        assert!((primal_objective(&x, &p).unwrap() - 6.25).abs() < 1e-14);
        let z0 = Mat::zeros(2, 1);
        assert_eq!(dual_objective(&z0, &p).unwrap(), 0.0);
        let infeasible = Mat::from_col_major(2, 1, vec![3.0, 0.0]).unwrap();
        assert!(matches!(dual_objective(&infeasible, &p), Err(Error::Infeasible { .. })));
    }

    #[test]
    fn converged_optimum_of_two_points() {
        let p = two_point(1.0);
        let res = solve(&p, &SolverConfig::default().with_tol(1e-10), None).unwrap();
        assert!(res.converged);
        let expect = [0.6, 0.8, 2.4, 3.2];
        for (a, b) in res.x.as_slice().iter().zip(expect) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig::default().with_tol(0.0).validate().is_err());
        let c = SolverConfig { sigma_growth: 0.5, ..SolverConfig::default() };
        assert!(c.validate().is_err());
    }
}
