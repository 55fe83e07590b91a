//! Inexact ADMM, used to warm-start the augmented Lagrangian solver and as a
//! first-order baseline.
//!
//! One sweep with fixed `sigma`:
//!
//! 1. `R = A + B*(sigma U - Z)`, then solve `(I + sigma L_J) X^T = R^T` by CG
//!    to absolute accuracy `eps_k`;
//! 2. `U = Prox_{p/sigma}(B(X) + Z / sigma)`;
//! 3. `Z = Z + tau sigma (B(X) - U)`.

use std::time::Instant;

use serde::Serialize;

use crate::cg::{conjugate_gradient, CgOutcome};
use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::Mat;
use crate::prox::shrink_l2_in_place;
use crate::ssnal::{kkt_residuals, Iterate, KktResidual, OuterStep, Problem, SolveResult};

/// Upper end of the admissible multiplier step, `(1 + sqrt 5) / 2`.
pub const GOLDEN_RATIO: f64 = 1.618_033_988_749_895;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdmmConfig {
    pub sigma: f64,
    pub tau_step: f64,
    /// X-step accuracy `eps_k = eps0 * eps_decay^k`.
    pub eps0: f64,
    pub eps_decay: f64,
    pub cg_max: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self { sigma: 1.0, tau_step: 1.618, eps0: 1.0, eps_decay: 0.9, cg_max: 500 }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Parameter("ADMM sigma must be positive".into()));
        }
        if !(self.tau_step > 0.0 && self.tau_step < GOLDEN_RATIO) {
            return Err(Error::Parameter(format!("tau_step = {} must lie in (0, {GOLDEN_RATIO})", self.tau_step)));
        }
        if !(self.eps0 >= 0.0 && self.eps_decay > 0.0 && self.eps_decay < 1.0) {
            return Err(Error::Parameter("need eps0 >= 0 and eps_decay in (0, 1)".into()));
        }
        Ok(())
    }
}

/// When to stop a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum AdmmStop {
    /// Fixed number of sweeps (warm-start mode).
    Iterations(usize),
    /// Until `max(eta_P, eta_D, eta) <= tol`, at most `max_iters` sweeps.
    Tolerance { tol: f64, max_iters: usize },
}

/// Solves `(I + sigma L_J) X^T = R^T` by CG starting from `R`.
pub fn x_system_solve(
    graph: &WeightedGraph,
    sigma: f64,
    r: &Mat,
    tol_abs: f64,
    cg_max: usize,
) -> Result<(Mat, CgOutcome)> {
    let mut x = r.clone();
    let out = x_system_solve_from(graph, sigma, r, &mut x, tol_abs, cg_max)?;
    Ok((x, out))
}

/// As [`x_system_solve`] but starting from the contents of `x`.
pub fn x_system_solve_from(
    graph: &WeightedGraph,
    sigma: f64,
    r: &Mat,
    x: &mut Mat,
    tol_abs: f64,
    cg_max: usize,
) -> Result<CgOutcome> {
    if sigma == 0.0 {
        *x = r.clone();
        return Ok(CgOutcome { iterations: 0, residual: 0.0, converged: true });
    }
    let lap = graph.laplacian();
    conjugate_gradient(
        |p, out| {
            lap.right_multiply_into(p, out)?;
            out.scale(sigma);
            out.axpy(1.0, p);
            Ok(())
        },
        r,
        x,
        tol_abs,
        cg_max,
    )
}

/// Runs inexact ADMM from `init` (or `X = A, U = B(A), Z = 0`).
pub fn iadmm_run(problem: &Problem, config: &AdmmConfig, init: Option<Iterate>, stop: AdmmStop) -> Result<SolveResult> {
    config.validate()?;
    let started = Instant::now();
    let graph = problem.graph();
    let sigma = config.sigma;
    let mut it = match init {
        Some(it) => {
            problem.check_iterate(&it)?;
            it
        }
        None => problem.default_start(),
    };

    let (max_iters, tol) = match stop {
        AdmmStop::Iterations(k) => (k, None),
        AdmmStop::Tolerance { tol, max_iters } => (max_iters, Some(tol)),
    };
    let mut kkt = KktResidual::default();
    if let Some(tol) = tol {
        kkt = kkt_residuals(&it.x, &it.u, &it.z, problem)?;
        if kkt.max() <= tol {
            return SolveResult::assemble(problem, it, kkt, (0, 0, 0), true, started, Vec::new());
        }
    }

    let radii = problem.spec().radii();
    let mut cg_total = 0;
    let mut sweeps = 0;
    let mut converged = false;
    let mut trace = Vec::new();
    let mut bx = Mat::zeros(problem.d(), problem.num_edges());
    while sweeps < max_iters {
        let eps_k = config.eps0 * config.eps_decay.powi(sweeps as i32);

        let mut w = it.u.scaled(sigma);
        w.axpy(-1.0, &it.z);
        let mut r = graph.apply_b_adjoint(&w)?;
        r.axpy(1.0, problem.data());
        // The achievable residual is bounded by rounding in ||R||.
        let target = eps_k.max(1e3 * f64::EPSILON * (1.0 + r.norm()));
        let cg = x_system_solve_from(graph, sigma, &r, &mut it.x, target, config.cg_max)?;
        if !cg.converged && cg.residual > 10.0 * target {
            return Err(Error::NumericalFailure(format!(
                "ADMM X-step: CG residual {:.3e} after {} iterations exceeds 10 eps_k = {:.3e}",
                cg.residual,
                cg.iterations,
                10.0 * target
            )));
        }
        cg_total += cg.iterations;

        graph.apply_b_into(&it.x, &mut bx)?;
        let mut u = bx.clone();
        u.axpy(1.0 / sigma, &it.z);
        u.par_columns_mut(2 * u.rows(), |e, col| shrink_l2_in_place(col, radii[e] / sigma));
        it.u = u;

        let mut step = bx.sub(&it.u);
        step.scale(config.tau_step * sigma);
        it.z.axpy(1.0, &step);
        sweeps += 1;

        if !it.is_finite() {
            return Err(Error::Diverged {
                message: format!("non-finite ADMM iterate at sweep {sweeps}"),
                last_finite: None,
            });
        }
        if let Some(tol) = tol {
            kkt = kkt_residuals(&it.x, &it.u, &it.z, problem)?;
            if sweeps % 50 == 0 {
                trace.push(OuterStep {
                    sigma,
                    eps: eps_k,
                    kkt,
                    primal_obj: crate::ssnal::primal_objective(&it.x, problem)?,
                    newton_iters: 0,
                    cg_iters: cg.iterations,
                    subproblem_converged: cg.converged,
                });
            }
            if kkt.max() <= tol {
                converged = true;
                break;
            }
        }
    }
    if tol.is_none() {
        kkt = kkt_residuals(&it.x, &it.u, &it.z, problem)?;
        converged = true;
    }
    SolveResult::assemble(problem, it, kkt, (sweeps, 0, cg_total), converged, started, trace)
}
