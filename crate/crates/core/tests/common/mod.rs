//! Independent reference implementations shared by the integration tests
//! and the acceptance runner.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use sonclust::linalg::Mat;
use sonclust::prox::{self, WeightedNormSpec};
use sonclust::ssncg::{self, Subproblem};
use sonclust::{Problem, WeightedGraph};

pub fn gaussian_mat<R: RngCore>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        scale * z
    })
}

pub fn gaussian_vec<R: RngCore>(rng: &mut R, len: usize, scale: f64) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Random connected weighted graph: a spanning path in random order plus
/// random extra edges.
pub fn random_graph<R: RngCore>(rng: &mut R, n: usize) -> WeightedGraph {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges = std::collections::BTreeMap::new();
    for w in order.windows(2) {
        edges.insert((w[0].min(w[1]), w[0].max(w[1])), rng.random_range(0.1..2.0));
    }
    for _ in 0..n {
        let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
        if i != j {
            edges.insert((i.min(j), i.max(j)), rng.random_range(0.1..2.0));
        }
    }
    let list: Vec<(usize, usize, f64)> = edges.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    WeightedGraph::from_weighted_edges(n, &list).unwrap()
}

/// A small random subproblem `(problem, X, Z~, sigma)`.
pub struct SubproblemCase {
    pub problem: Problem,
    pub x: Mat,
    pub z: Mat,
    pub sigma: f64,
}

pub fn random_subproblem<R: RngCore>(rng: &mut R, max_n: usize, max_d: usize) -> SubproblemCase {
    let n = rng.random_range(3..=max_n);
    let d = rng.random_range(1..=max_d);
    let graph = random_graph(rng, n);
    let a = gaussian_mat(rng, d, n, 1.0);
    let gamma = rng.random_range(0.05..1.5);
    let problem = Problem::new(a, graph, gamma).unwrap();
    let m = problem.num_edges();
    let x = gaussian_mat(rng, d, n, 1.0);
    let z = gaussian_mat(rng, d, m, gamma);
    let sigma = 10f64.powf(rng.random_range(-1.0..1.0));
    SubproblemCase { problem, x, z, sigma }
}

/// Signed incidence matrix: row `e = (i, j)` holds `+1` at `i`, `-1` at `j`.
pub fn dense_incidence(graph: &WeightedGraph) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(graph.num_edges(), graph.n());
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        b[(e, i)] = 1.0;
        b[(e, j)] = -1.0;
    }
    b
}

pub fn to_dmatrix(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_dmatrix(m: &DMatrix<f64>) -> Mat {
    Mat::from_col_major(m.nrows(), m.ncols(), m.as_slice().to_vec()).unwrap()
}

/// `X B^T + Z~ / sigma` from the explicit incidence matrix.
pub fn dense_shifted(case: &SubproblemCase) -> DMatrix<f64> {
    let b = dense_incidence(case.problem.graph());
    to_dmatrix(&case.x) * b.transpose() + to_dmatrix(&case.z) / case.sigma
}

/// `phi` evaluated through the explicit minimization over `U`:
/// `1/2 ||X - A||^2 + sum_e min_u { r_e ||u|| + sigma/2 ||u - D_e||^2 }
/// - ||Z~||^2 / (2 sigma)`, the minimizer being block soft-thresholding.
pub fn oracle_phi(case: &SubproblemCase) -> f64 {
    oracle_phi_at(case, &case.x)
}

pub fn oracle_phi_at(case: &SubproblemCase, x: &Mat) -> f64 {
    let b = dense_incidence(case.problem.graph());
    let dmat = to_dmatrix(x) * b.transpose() + to_dmatrix(&case.z) / case.sigma;
    let radii = case.problem.spec().radii();
    let mut total = 0.5 * (to_dmatrix(x) - to_dmatrix(case.problem.data())).norm_squared();
    for (e, &r) in radii.iter().enumerate() {
        let de: Vec<f64> = dmat.column(e).iter().copied().collect();
        let u = prox::prox_l2_block(&de, r / case.sigma);
        let un = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        let gap: f64 = u.iter().zip(&de).map(|(a, b)| (a - b) * (a - b)).sum();
        total += r * un + 0.5 * case.sigma * gap;
    }
    total - 0.5 * case.z.norm_sq() / case.sigma
}

/// Smallest relative distance of `sigma ||D_e||` to the kink `r_e`.
pub fn kink_margin(case: &SubproblemCase, x: &Mat) -> f64 {
    let b = dense_incidence(case.problem.graph());
    let dmat = to_dmatrix(x) * b.transpose() + to_dmatrix(&case.z) / case.sigma;
    let radii = case.problem.spec().radii();
    (0..radii.len()).map(|e| (case.sigma * dmat.column(e).norm() / radii[e] - 1.0).abs()).fold(f64::INFINITY, f64::min)
}

/// Dense `(dn) x (dn)` generalized Jacobian of `grad phi` at `X`, assembled
/// as `I + sigma sum_e (b_e b_e^T) (x) M_e` with `M_e = I` on inactive edges
/// and `alpha_e (I - u u^T)` on active ones, `u = D_e / ||D_e||`. Vectorization
/// is column-major: entry `(r, j)` of a `d x n` matrix sits at `j d + r`.
pub fn dense_jacobian(case: &SubproblemCase) -> DMatrix<f64> {
    let d = case.problem.d();
    let n = case.problem.n();
    let dmat = dense_shifted(case);
    let radii = case.problem.spec().radii();
    let mut v = DMatrix::identity(d * n, d * n);
    for (e, &(i, j)) in case.problem.graph().edges().iter().enumerate() {
        let de = dmat.column(e).into_owned();
        let norm = de.norm();
        let alpha = if norm > 0.0 { radii[e] / (case.sigma * norm) } else { f64::INFINITY };
        let m = if alpha < 1.0 {
            let u = &de / norm;
            (DMatrix::identity(d, d) - &u * u.transpose()) * alpha
        } else {
            DMatrix::identity(d, d)
        };
        for (p, q, s) in [(i, i, 1.0), (j, j, 1.0), (i, j, -1.0), (j, i, -1.0)] {
            let mut block = v.view_mut((p * d, q * d), (d, d));
            block += &m * (case.sigma * s);
        }
    }
    v
}

/// Relative error of the matrix-free product against the dense Jacobian
/// for one random direction.
pub fn jacobian_pair_error<R: RngCore>(rng: &mut R, case: &SubproblemCase) -> f64 {
    let h = gaussian_mat(rng, case.problem.d(), case.problem.n(), 1.0);
    let info = ssncg::select_jacobian(&case.x, &case.z, case.sigma, &case.problem).unwrap();
    let fast = ssncg::jacobian_vector_product(&info, &h).unwrap();
    let dense = dense_jacobian(case) * DVector::from_column_slice(h.as_slice());
    let fast_v = DVector::from_column_slice(fast.as_slice());
    (fast_v - &dense).norm() / dense.norm()
}

/// Relative error between the analytic gradient and central differences of
/// the oracle `phi`, entry by entry. `None` if `X` lies too close to a kink.
pub fn gradient_fd_error(case: &SubproblemCase) -> Option<f64> {
    let step = 1e-6;
    if kink_margin(case, &case.x) < 1e-3 {
        return None;
    }
    let grad = ssncg::phi_gradient(&case.x, &case.z, case.sigma, &case.problem).unwrap();
    let mut fd = Mat::zeros(grad.rows(), grad.cols());
    let mut probe = case.x.clone();
    for k in 0..probe.as_slice().len() {
        let orig = probe.as_slice()[k];
        probe.as_mut_slice()[k] = orig + step;
        let plus = oracle_phi_at(case, &probe);
        probe.as_mut_slice()[k] = orig - step;
        let minus = oracle_phi_at(case, &probe);
        probe.as_mut_slice()[k] = orig;
        fd.as_mut_slice()[k] = (plus - minus) / (2.0 * step);
    }
    Some(fd.dist(&grad) / grad.norm().max(1e-3))
}

/// Samples random subproblems until one is away from every kink.
pub fn smooth_subproblem<R: RngCore>(rng: &mut R, max_n: usize, max_d: usize) -> SubproblemCase {
    loop {
        let case = random_subproblem(rng, max_n, max_d);
        if kink_margin(&case, &case.x) >= 1e-3 {
            return case;
        }
    }
}

/// Outcome of one randomized prox/Moreau check.
pub struct ProxCheck {
    pub name: &'static str,
    pub error: f64,
    pub tol: f64,
}

impl ProxCheck {
    pub fn passed(&self) -> bool {
        self.error <= self.tol
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Projection onto the infinity-norm ball by clamping.
fn project_linf_ball(x: &[f64], r: f64) -> Vec<f64> {
    x.iter().map(|v| v.clamp(-r, r)).collect()
}

/// One round of randomized prox checks: Moreau decompositions
/// `x = prox_{tf}(x) + t proj(x / t)` for the three norms, first-order
/// optimality of block soft-thresholding, variational inequality of the
/// l1-ball projection, and the edge-wise identity behind `prox_p`.
pub fn prox_round<R: RngCore>(rng: &mut R) -> Vec<ProxCheck> {
    let dim = rng.random_range(1..=8);
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let x = gaussian_vec(rng, dim, scale);
    let t = 10f64.powf(rng.random_range(-2.0..2.0)) * scale;
    let tol = 1e-12 * (1.0 + norm(&x));
    let mut out = Vec::new();

    // Moreau: prox of t||.||_2 plus t times projection onto the unit 2-ball.
    let p = prox::prox_l2_block(&x, t);
    let xs: Vec<f64> = x.iter().map(|v| v / t).collect();
    let q: Vec<f64> = if norm(&xs) > 1.0 { xs.iter().map(|v| v / norm(&xs)).collect() } else { xs.clone() };
    let recon: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a + t * b).collect();
    out.push(ProxCheck { name: "moreau-l2", error: norm(&sub(&recon, &x)), tol });

    // First-order optimality of the l2 prox: x - p in t * subdiff ||p||.
    let err = if norm(&p) > 0.0 {
        let expect: Vec<f64> = p.iter().map(|v| t * v / norm(&p)).collect();
        norm(&sub(&sub(&x, &p), &expect))
    } else {
        (norm(&x) - t).max(0.0)
    };
    out.push(ProxCheck { name: "optimality-l2", error: err, tol });

    // Moreau for l1: conjugate is the indicator of the unit inf-ball.
    let p1 = prox::prox_l1(&x, t);
    let q1 = project_linf_ball(&xs, 1.0);
    let recon: Vec<f64> = p1.iter().zip(&q1).map(|(a, b)| a + t * b).collect();
    out.push(ProxCheck { name: "moreau-l1", error: norm(&sub(&recon, &x)), tol });

    // Moreau for inf-norm: conjugate is the indicator of the unit l1-ball.
    let pinf = prox::prox_linf(&x, t);
    let qinf = prox::project_l1_ball(&xs, 1.0);
    let recon: Vec<f64> = pinf.iter().zip(&qinf).map(|(a, b)| a + t * b).collect();
    out.push(ProxCheck { name: "moreau-linf", error: norm(&sub(&recon, &x)), tol: 1e-11 * (1.0 + norm(&x)) });

    // l1-ball projection: feasible and <x - P, y - P> <= 0 for feasible y.
    let r = t;
    let pb = prox::project_l1_ball(&x, r);
    let l1: f64 = pb.iter().map(|v| v.abs()).sum();
    let mut worst = (l1 - r).max(0.0);
    for _ in 0..4 {
        let y = gaussian_vec(rng, dim, 1.0);
        let y1: f64 = y.iter().map(|v| v.abs()).sum();
        let y: Vec<f64> = y.iter().map(|v| v * r * rng.random_range(0.0..1.0) / y1).collect();
        let vi: f64 = sub(&x, &pb).iter().zip(sub(&y, &pb)).map(|(a, b)| a * b).sum();
        worst = worst.max(vi);
    }
    out.push(ProxCheck { name: "projection-l1-ball", error: worst, tol: 1e-10 * (1.0 + norm(&x)) * (1.0 + r) });

    // prox_p on one edge matrix against Moreau with the dual ball projection.
    let m = rng.random_range(1..=4);
    let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.1..2.0)).collect();
    let gamma = rng.random_range(0.1..2.0);
    let spec = WeightedNormSpec::new(gamma, &weights).unwrap();
    let u = Mat::from_col_major(dim, m, gaussian_vec(rng, dim * m, scale)).unwrap();
    let residual = prox::prox_conjugate_check(&u, t, &spec).unwrap();
    out.push(ProxCheck { name: "moreau-prox-p", error: residual, tol: 1e-12 * (1.0 + u.norm()) });

    out
}

/// Rand index between two labelings.
pub fn rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 1.0;
    }
    let mut agree = 0u64;
    for i in 0..n {
        for j in i + 1..n {
            if (a[i] == a[j]) == (b[i] == b[j]) {
                agree += 1;
            }
        }
    }
    agree as f64 / (n * (n - 1) / 2) as f64
}

/// Convenience handle for the subproblem API.
pub fn subproblem(case: &SubproblemCase) -> Subproblem<'_> {
    Subproblem::new(&case.problem, &case.z, case.sigma).unwrap()
}

/// Reference optimum from accelerated projected gradient on the dual
/// `min_Z 1/2 ||A - B*(Z)||^2` over `||Z_e|| <= gamma w_e`, assembled with
/// dense matrices. Returns `(X, Z, gap)` with `X = A - B*(Z)` and the
/// certified duality gap `P(X) - D(Z)`.
pub fn dual_oracle(a: &Mat, graph: &WeightedGraph, gamma: f64, iters: usize) -> (Mat, Mat, f64) {
    let inc = dense_incidence(graph);
    let am = to_dmatrix(a);
    let d = a.rows();
    let m = graph.num_edges();
    let radii: Vec<f64> = graph.weights().iter().map(|w| gamma * w).collect();
    let lip = (inc.transpose() * &inc).symmetric_eigenvalues().max().max(1e-12);
    let project = |z: &mut DMatrix<f64>| {
        for (e, r) in radii.iter().enumerate() {
            let n = z.column(e).norm();
            if n > *r {
                let s = *r / n;
                z.column_mut(e).scale_mut(s);
            }
        }
    };
    let mut z = DMatrix::<f64>::zeros(d, m);
    let mut y = z.clone();
    let mut t = 1.0f64;
    for _ in 0..iters {
        let x = &am - &y * &inc;
        // Gradient of 1/2 ||A - Y B||^2 in Y is -(A - Y B) B^T = -X B^T.
        let mut next = &y + (&x * inc.transpose()) / lip;
        project(&mut next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &z) * ((t - 1.0) / t_next);
        z = next;
        t = t_next;
    }
    let x = &am - &z * &inc;
    let primal = reference_primal(&from_dmatrix(&x), a, graph, gamma);
    let v = &z * &inc;
    let dual = am.dot(&v) - 0.5 * v.norm_squared();
    (from_dmatrix(&x), from_dmatrix(&z), primal - dual)
}

/// Primal objective summed edge by edge.
pub fn reference_primal(x: &Mat, a: &Mat, graph: &WeightedGraph, gamma: f64) -> f64 {
    let mut fit = 0.0;
    for (p, q) in x.as_slice().iter().zip(a.as_slice()) {
        fit += (p - q) * (p - q);
    }
    let mut pen = 0.0;
    for (&(i, j), w) in graph.edges().iter().zip(graph.weights()) {
        let diff: f64 = x.col(i).iter().zip(x.col(j)).map(|(u, v)| (u - v) * (u - v)).sum();
        pen += w * diff.sqrt();
    }
    0.5 * fit + gamma * pen
}
