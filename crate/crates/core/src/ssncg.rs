//! Semismooth Newton-CG for the augmented Lagrangian subproblem.
//!
//! For fixed `sigma` and multiplier `Z~`, minimizing the augmented
//! Lagrangian over `U` in closed form leaves
//!
//! ```text
//! phi(X) = 1/2 ||X - A||^2 + sum_e h_e(||D_e||) - ||Z~||^2 / (2 sigma),
//! D = B(X) + Z~ / sigma,
//! ```
//!
//! where `h_e` is the Moreau envelope of `sigma`-scaled `r_e ||.||`,
//! `r_e = gamma w_e`: `h_e(v) = sigma v^2 / 2` for `v <= r_e / sigma` and
//! `r_e v - r_e^2 / (2 sigma)` beyond. The gradient is
//! `X - A + B*(Pi(sigma D))` with `Pi` the projection onto the dual balls.
//!
//! The Newton operator is `V = I + sigma B* (I - P) B` with `P` an element of
//! the generalized Jacobian of the block soft-threshold at `D`. On edges
//! with `alpha_e = r_e / (sigma ||D_e||) < 1`,
//! `I - P = alpha_e (I - D_e D_e^T / ||D_e||^2)`; elsewhere `I - P = I`.
//! So `V(H) = H + sigma (H K - B*(D diag(rho)))` where `K` is the Laplacian
//! with edge scalars `alpha_e` on active edges and `1` otherwise, and
//! `rho_e = alpha_e <D_e, h_i - h_j> / ||D_e||^2` lives on active edges only.

use serde::Serialize;

use crate::cg::{preconditioned_cg, CgOutcome, OnStall};
use crate::error::{Error, Result};
use crate::linalg::{norm2, CsrMatrix, EdgeMatrix, Mat};
use crate::par;
use crate::prox::shrink_l2_in_place;
use crate::ssnal::{subproblem_tolerance_met, Problem};

/// Backtracking never goes deeper than this many halvings.
pub const MAX_BACKTRACKS: usize = 60;

/// Largest `d` for which [`LinearSolver::Auto`] factorizes the Newton
/// system instead of running CG.
pub const AUTO_DIRECT_MAX_DIM: usize = 4;

/// How Newton directions are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LinearSolver {
    /// Sparse Cholesky when `d <= AUTO_DIRECT_MAX_DIM`, CG otherwise.
    Auto,
    /// Matrix-free diagonally preconditioned CG.
    Cg,
    /// Sparse Cholesky of the assembled system.
    Direct,
}

impl LinearSolver {
    pub fn uses_direct(self, d: usize) -> bool {
        match self {
            LinearSolver::Auto => d <= AUTO_DIRECT_MAX_DIM,
            LinearSolver::Cg => false,
            LinearSolver::Direct => true,
        }
    }
}

/// Newton-CG settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NewtonConfig {
    /// Armijo parameter, in `(0, 1/2)`.
    pub mu: f64,
    /// Forcing exponent for the CG tolerance, in `(0, 1]`.
    pub tau: f64,
    /// Cap on the CG residual, in `(0, 1)`.
    pub eta_bar: f64,
    /// Backtracking ratio, in `(0, 1)`.
    pub delta: f64,
    pub max_newton: usize,
    pub max_cg: usize,
    /// Absolute gradient-norm floor. The outer criterion normally governs
    /// termination; `0` disables the floor.
    pub grad_tol: f64,
    pub linear_solver: LinearSolver,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            mu: 1e-4,
            tau: 0.5,
            eta_bar: 0.05,
            delta: 0.5,
            max_newton: 50,
            max_cg: 300,
            grad_tol: 0.0,
            linear_solver: LinearSolver::Auto,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.mu > 0.0
            && self.mu < 0.5
            && self.tau > 0.0
            && self.tau <= 1.0
            && self.eta_bar > 0.0
            && self.eta_bar < 1.0
            && self.delta > 0.0
            && self.delta < 1.0
            && self.grad_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Parameter(format!("invalid Newton settings: {self:?}")))
        }
    }
}

/// Envelope value `h_e(v)` for radius `r` and penalty parameter `sigma`.
#[inline]
fn envelope(v: f64, r: f64, sigma: f64) -> f64 {
    if v * sigma <= r {
        0.5 * sigma * v * v
    } else {
        r * v - 0.5 * r * r / sigma
    }
}

/// `phi` and `grad phi` at one point.
#[derive(Clone, Debug)]
pub struct PhiEval {
    pub value: f64,
    pub grad: Mat,
    pub grad_norm: f64,
    d: EdgeMatrix,
    /// `value` without the constant `-||Z~||^2 / (2 sigma)`.
    merit: f64,
}

impl PhiEval {
    /// `D = B(X) + Z~ / sigma`.
    pub fn shifted(&self) -> &EdgeMatrix {
        &self.d
    }
}

/// The subproblem for one `(Z~, sigma)` pair.
#[derive(Clone, Copy, Debug)]
pub struct Subproblem<'a> {
    problem: &'a Problem,
    z_tilde: &'a EdgeMatrix,
    sigma: f64,
}

impl<'a> Subproblem<'a> {
    pub fn new(problem: &'a Problem, z_tilde: &'a EdgeMatrix, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Parameter(format!("sigma = {sigma} must be positive")));
        }
        if z_tilde.shape() != (problem.d(), problem.num_edges()) {
            return Err(crate::error::shape_err(
                "Subproblem Z",
                format!("{}x{}", problem.d(), problem.num_edges()),
                format!("{}x{}", z_tilde.rows(), z_tilde.cols()),
            ));
        }
        Ok(Self { problem, z_tilde, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn problem(&self) -> &Problem {
        self.problem
    }

    fn shifted(&self, x: &Mat) -> Result<EdgeMatrix> {
        let mut d = self.problem.graph().apply_b(x)?;
        d.axpy(1.0 / self.sigma, self.z_tilde);
        Ok(d)
    }

    fn merit(&self, x: &Mat, d: &EdgeMatrix) -> f64 {
        let fit = 0.5 * x.dist(self.problem.data()).powi(2);
        let radii = self.problem.spec().radii();
        let env: f64 = d.columns().zip(radii).map(|(c, &r)| envelope(norm2(c), r, self.sigma)).sum();
        fit + env
    }

    fn constant(&self) -> f64 {
        -0.5 * self.z_tilde.norm_sq() / self.sigma
    }

    /// `phi(X)`.
    pub fn value(&self, x: &Mat) -> Result<f64> {
        self.problem.data().check_shape(x, "phi")?;
        let d = self.shifted(x)?;
        Ok(self.merit(x, &d) + self.constant())
    }

    /// `Pi(sigma D)`: projection of `sigma D` onto the balls of radius `gamma w_e`.
    fn dual_part(&self, d: &EdgeMatrix) -> EdgeMatrix {
        let mut out = d.scaled(self.sigma);
        let radii = self.problem.spec().radii();
        out.par_columns_mut(2 * d.rows(), |e, col| crate::prox::project_ball_in_place(col, radii[e]));
        out
    }

    fn evaluate_with(&self, x: &Mat, d: EdgeMatrix) -> Result<PhiEval> {
        let merit = self.merit(x, &d);
        let mut grad = self.problem.graph().apply_b_adjoint(&self.dual_part(&d))?;
        grad.axpy(1.0, x);
        grad.axpy(-1.0, self.problem.data());
        let grad_norm = grad.norm();
        Ok(PhiEval { value: merit + self.constant(), grad, grad_norm, d, merit })
    }

    /// `phi(X)` and `grad phi(X)` together.
    pub fn evaluate(&self, x: &Mat) -> Result<PhiEval> {
        self.problem.data().check_shape(x, "phi")?;
        let d = self.shifted(x)?;
        self.evaluate_with(x, d)
    }

    /// `grad phi(X) = X - A + B*(Pi(sigma B(X) + Z~))`.
    pub fn gradient(&self, x: &Mat) -> Result<Mat> {
        Ok(self.evaluate(x)?.grad)
    }

    /// Generalized Jacobian element at `X`.
    pub fn select_jacobian(&self, x: &Mat) -> Result<JacobianInfo> {
        self.problem.data().check_shape(x, "select_jacobian")?;
        Ok(self.jacobian_from_shifted(self.shifted(x)?))
    }

    fn jacobian_from_shifted(&self, d: EdgeMatrix) -> JacobianInfo {
        JacobianInfo::new(self.problem, d, self.sigma)
    }

    /// Armijo backtracking along `dir` from the evaluated point `at`.
    pub fn line_search(&self, x: &Mat, dir: &Mat, at: &PhiEval, config: &NewtonConfig) -> Result<LineSearchOutcome> {
        let slope = at.grad.dot(dir);
        if !(slope < 0.0) {
            return Err(Error::NumericalFailure(format!(
                "Newton direction is not a descent direction (slope {slope:e})"
            )));
        }
        let bd = self.problem.graph().apply_b(dir)?;
        // Rounding in the merit sum; without it the test stalls once the
        // predicted decrease falls below machine precision.
        let slack = 16.0 * f64::EPSILON * (1.0 + at.merit.abs());
        let mut step = 1.0;
        for m in 0..=MAX_BACKTRACKS {
            let mut x_new = x.clone();
            x_new.axpy(step, dir);
            let mut d_new = at.d.clone();
            d_new.axpy(step, &bd);
            let merit = self.merit(&x_new, &d_new);
            if merit <= at.merit + config.mu * step * slope + slack {
                return Ok(LineSearchOutcome {
                    step,
                    backtracks: m,
                    value: merit + self.constant(),
                    x: x_new,
                    d: d_new,
                });
            }
            step *= config.delta;
        }
        Err(Error::LineSearch { steps: MAX_BACKTRACKS, slope })
    }

    /// Newton-CG iterations until criterion (A) holds for `outer_eps`.
    pub fn solve(&self, x0: &Mat, config: &NewtonConfig, outer_eps: f64) -> Result<SubproblemSolution> {
        config.validate()?;
        let mut x = x0.clone();
        let mut ev = self.evaluate(&x)?;
        let mut history = Vec::new();
        let (mut newton_iters, mut cg_iters, mut backtracks) = (0, 0, 0);
        let pattern = if config.linear_solver.uses_direct(self.problem.d()) {
            Some(self.problem.newton_pattern()?)
        } else {
            None
        };
        let converged = loop {
            if !ev.grad_norm.is_finite() {
                return Err(Error::NumericalFailure("non-finite gradient in Newton-CG".into()));
            }
            history.push(ev.grad_norm);
            if subproblem_tolerance_met(ev.grad_norm, outer_eps, self.sigma) || ev.grad_norm <= config.grad_tol {
                break true;
            }
            if newton_iters >= config.max_newton {
                break false;
            }
            let info = self.jacobian_from_shifted(ev.d.clone());
            let rhs = ev.grad.scaled(-1.0);
            let dir = match pattern.as_ref() {
                Some(p) => p.factorize(self.problem.graph(), self.sigma, &info.edge_blocks())?.solve(&rhs),
                None => {
                    let tol = config.eta_bar.min(ev.grad_norm.powf(1.0 + config.tau));
                    let (dir, cg) = info.cg_solve(&rhs, tol, config.max_cg)?;
                    cg_iters += cg.iterations;
                    dir
                }
            };
            let ls = self.line_search(&x, &dir, &ev, config)?;
            backtracks += ls.backtracks;
            x = ls.x;
            ev = self.evaluate_with(&x, ls.d)?;
            newton_iters += 1;
        };

        let mut u = ev.d.clone();
        let radii = self.problem.spec().radii();
        let sigma = self.sigma;
        u.par_columns_mut(2 * u.rows(), |e, col| shrink_l2_in_place(col, radii[e] / sigma));
        Ok(SubproblemSolution {
            x,
            u,
            newton_iters,
            cg_iters,
            backtracks,
            grad_norm: ev.grad_norm,
            converged,
            grad_history: history,
        })
    }
}

/// Result of one backtracking search.
#[derive(Clone, Debug)]
pub struct LineSearchOutcome {
    pub step: f64,
    pub backtracks: usize,
    pub value: f64,
    pub x: Mat,
    d: EdgeMatrix,
}

/// Approximate subproblem minimizer and its bookkeeping.
#[derive(Clone, Debug)]
pub struct SubproblemSolution {
    pub x: Mat,
    /// `Prox_{p/sigma}(B(X) + Z~/sigma)`.
    pub u: EdgeMatrix,
    pub newton_iters: usize,
    pub cg_iters: usize,
    pub backtracks: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// `||grad phi||` at every Newton iterate, starting with `x0`.
    pub grad_history: Vec<f64>,
}

/// The selected Jacobian element, ready for matrix-free products.
#[derive(Clone, Debug)]
pub struct JacobianInfo {
    sigma: f64,
    d: EdgeMatrix,
    alpha: Vec<f64>,
    active: Vec<usize>,
    inv_norm_sq: Vec<f64>,
    coupling: CsrMatrix,
    // node -> (position in `active`, sign)
    act_ptr: Vec<usize>,
    act_inc: Vec<(usize, f64)>,
    edges: Vec<(usize, usize)>,
}

impl JacobianInfo {
    fn new(problem: &Problem, d: EdgeMatrix, sigma: f64) -> Self {
        let graph = problem.graph();
        let radii = problem.spec().radii();
        let norms: Vec<f64> = d.columns().map(norm2).collect();
        let alpha: Vec<f64> =
            norms.iter().zip(radii).map(|(&v, &r)| if v > 0.0 { r / (sigma * v) } else { f64::INFINITY }).collect();
        let active: Vec<usize> = (0..alpha.len()).filter(|&e| alpha[e] < 1.0).collect();
        let inv_norm_sq = active.iter().map(|&e| 1.0 / (norms[e] * norms[e])).collect();
        let coupling = graph.laplacian_with(|e| alpha[e].min(1.0));

        let n = graph.n();
        let mut act_ptr = vec![0usize; n + 1];
        for &e in &active {
            let (i, j) = graph.edges()[e];
            act_ptr[i + 1] += 1;
            act_ptr[j + 1] += 1;
        }
        for v in 0..n {
            act_ptr[v + 1] += act_ptr[v];
        }
        let mut fill = act_ptr[..n].to_vec();
        let mut act_inc = vec![(0usize, 0.0f64); act_ptr[n]];
        for (k, &e) in active.iter().enumerate() {
            let (i, j) = graph.edges()[e];
            act_inc[fill[i]] = (k, 1.0);
            fill[i] += 1;
            act_inc[fill[j]] = (k, -1.0);
            fill[j] += 1;
        }

        Self { sigma, d, alpha, active, inv_norm_sq, coupling, act_ptr, act_inc, edges: graph.edges().to_vec() }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `D = B(X) + Z~ / sigma` at the selection point.
    pub fn shifted(&self) -> &EdgeMatrix {
        &self.d
    }

    /// `alpha_e`, `f64::INFINITY` for zero columns of `D`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Edges with `alpha_e < 1`, where `P` is nonzero.
    pub fn active_edges(&self) -> &[usize] {
        &self.active
    }

    /// Number of (edge, endpoint) pairs touched by the rank-one part of a
    /// product; always `2 |active|`.
    pub fn rank_one_visits(&self) -> usize {
        self.act_inc.len()
    }

    /// `V(H) = H + sigma B*(I - P) B (H)`.
    pub fn apply(&self, h: &Mat) -> Result<Mat> {
        let mut out = Mat::zeros(h.rows(), h.cols());
        self.apply_into(h, &mut out)?;
        Ok(out)
    }

    pub fn apply_into(&self, h: &Mat, out: &mut Mat) -> Result<()> {
        let n = self.act_ptr.len() - 1;
        if h.cols() != n || h.rows() != self.d.rows() {
            return Err(crate::error::shape_err(
                "jacobian_vector_product",
                format!("{}x{}", self.d.rows(), n),
                format!("{}x{}", h.rows(), h.cols()),
            ));
        }
        h.check_shape(out, "jacobian_vector_product output")?;
        let dim = h.rows();
        let rho: Vec<f64> = par::map_range(self.active.len(), 3 * dim * self.active.len(), |k| {
            let e = self.active[k];
            let (i, j) = self.edges[e];
            let de = self.d.col(e);
            let s: f64 = de.iter().zip(h.col(i).iter().zip(h.col(j))).map(|(dv, (a, b))| dv * (a - b)).sum();
            self.alpha[e] * s * self.inv_norm_sq[k]
        });
        let avg = dim * (self.coupling.nnz() / n.max(1) + 2);
        let sigma = self.sigma;
        out.par_columns_mut(avg, |v, col| {
            col.fill(0.0);
            for (u, kv) in self.coupling.row(v) {
                for (o, hu) in col.iter_mut().zip(h.col(u)) {
                    *o += kv * hu;
                }
            }
            for &(k, s) in &self.act_inc[self.act_ptr[v]..self.act_ptr[v + 1]] {
                let w = s * rho[k];
                for (o, dv) in col.iter_mut().zip(self.d.col(self.active[k])) {
                    *o -= w * dv;
                }
            }
            for (o, hv) in col.iter_mut().zip(h.col(v)) {
                *o = hv + sigma * *o;
            }
        });
        Ok(())
    }

    /// Per-edge `d x d` blocks of `I - P`, column-major and concatenated:
    /// the identity on inactive edges, `alpha_e (I - D_e D_e^T / ||D_e||^2)`
    /// on active ones.
    pub fn edge_blocks(&self) -> Vec<f64> {
        let dim = self.d.rows();
        let mut out = vec![0.0; self.edges.len() * dim * dim];
        for (e, block) in out.chunks_mut(dim * dim).enumerate() {
            if self.alpha[e] >= 1.0 {
                for r in 0..dim {
                    block[r * dim + r] = 1.0;
                }
            }
        }
        for (k, &e) in self.active.iter().enumerate() {
            let (a, inv) = (self.alpha[e], self.inv_norm_sq[k]);
            let de = self.d.col(e);
            let block = &mut out[e * dim * dim..(e + 1) * dim * dim];
            for c in 0..dim {
                for r in 0..dim {
                    let id = if r == c { 1.0 } else { 0.0 };
                    block[c * dim + r] = a * (id - de[r] * de[c] * inv);
                }
            }
        }
        out
    }

    /// Diagonal of `V` in the `d x n` layout:
    /// `1 + sigma sum_{e at v} m_e(r)`, where `m_e(r) = 1` on inactive edges
    /// and `alpha_e (1 - D_{r,e}^2 / ||D_e||^2)` on active ones.
    pub fn diagonal(&self) -> Mat {
        let (dim, n) = (self.d.rows(), self.act_ptr.len() - 1);
        let mut diag = Mat::zeros(dim, n);
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            if self.alpha[e] >= 1.0 {
                for v in [i, j] {
                    diag.col_mut(v).iter_mut().for_each(|x| *x += 1.0);
                }
            }
        }
        for (k, &e) in self.active.iter().enumerate() {
            let (i, j) = self.edges[e];
            let a = self.alpha[e];
            let inv = self.inv_norm_sq[k];
            for v in [i, j] {
                for (x, dv) in diag.col_mut(v).iter_mut().zip(self.d.col(e)) {
                    *x += a * (1.0 - dv * dv * inv).max(0.0);
                }
            }
        }
        diag.as_mut_slice().iter_mut().for_each(|x| *x = 1.0 + self.sigma * *x);
        diag
    }

    /// Diagonally preconditioned CG on `V(d) = rhs` to absolute residual
    /// `tol_abs`, from `d = 0`. On hitting `max_cg` the last iterate is
    /// returned; it is still a descent direction.
    pub fn cg_solve(&self, rhs: &Mat, tol_abs: f64, max_cg: usize) -> Result<(Mat, CgOutcome)> {
        let mut x = Mat::zeros(rhs.rows(), rhs.cols());
        let diag = self.diagonal();
        let out = preconditioned_cg(
            |p, ap| self.apply_into(p, ap),
            &diag,
            rhs,
            &mut x,
            tol_abs,
            max_cg,
            OnStall::LastIterate,
        )?;
        Ok((x, out))
    }
}

/// `phi(X)` for the subproblem with multiplier `z_tilde` and parameter `sigma`.
pub fn phi_value(x: &Mat, z_tilde: &EdgeMatrix, sigma: f64, problem: &Problem) -> Result<f64> {
    Subproblem::new(problem, z_tilde, sigma)?.value(x)
}

/// `grad phi(X)`.
pub fn phi_gradient(x: &Mat, z_tilde: &EdgeMatrix, sigma: f64, problem: &Problem) -> Result<Mat> {
    Subproblem::new(problem, z_tilde, sigma)?.gradient(x)
}

pub fn select_jacobian(x: &Mat, z_tilde: &EdgeMatrix, sigma: f64, problem: &Problem) -> Result<JacobianInfo> {
    Subproblem::new(problem, z_tilde, sigma)?.select_jacobian(x)
}

pub fn jacobian_vector_product(info: &JacobianInfo, h: &Mat) -> Result<Mat> {
    info.apply(h)
}

pub fn cg_solve(info: &JacobianInfo, rhs: &Mat, tol_abs: f64, max_cg: usize) -> Result<(Mat, CgOutcome)> {
    info.cg_solve(rhs, tol_abs, max_cg)
}

/// Backtracking search from `X` along `dir`; returns `(step, X + step dir, backtracks)`.
pub fn line_search(
    x: &Mat,
    dir: &Mat,
    z_tilde: &EdgeMatrix,
    sigma: f64,
    problem: &Problem,
    config: &NewtonConfig,
) -> Result<(f64, Mat, usize)> {
    let sp = Subproblem::new(problem, z_tilde, sigma)?;
    let at = sp.evaluate(x)?;
    let out = sp.line_search(x, dir, &at, config)?;
    Ok((out.step, out.x, out.backtracks))
}

/// Solves the subproblem from `x0` and recovers
/// `U = Prox_{p/sigma}(B(X) + Z~/sigma)`.
pub fn solve_subproblem(
    x0: &Mat,
    z_tilde: &EdgeMatrix,
    sigma: f64,
    problem: &Problem,
    config: &NewtonConfig,
    outer_eps: f64,
) -> Result<SubproblemSolution> {
    Subproblem::new(problem, z_tilde, sigma)?.solve(x0, config, outer_eps)
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn is<T: Send + Sync>() {}
    is::<JacobianInfo>();
    is::<Problem>();
}
