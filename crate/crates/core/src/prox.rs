//! Closed-form proximal maps and the dual-ball projection.
//!
//! The clustering penalty is `p(U) = gamma * sum_e w_e ||U_e||_2`. Its
//! conjugate is the indicator of `Omega = { Z : ||Z_e|| <= gamma * w_e }`,
//! so `Prox_{t p*}` is the column-wise projection onto those balls for any
//! `t > 0`.

use crate::error::{shape_err, Error, Result};
use crate::linalg::{norm2, EdgeMatrix, Mat};

/// Columns whose norm exceeds the radius by less than this relative slack
/// count as feasible. Keeps [`project_omega`] idempotent bit-for-bit.
const BALL_SLACK: f64 = 8.0 * f64::EPSILON;

/// Penalty data: the regularization weight and the per-edge weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedNormSpec {
    gamma: f64,
    weights: Vec<f64>,
    radii: Vec<f64>,
}

impl WeightedNormSpec {
    pub fn new(gamma: f64, weights: &[f64]) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::Parameter(format!("gamma = {gamma} must be positive")));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::Parameter(format!("edge weight {w} must be positive")));
        }
        Ok(Self { gamma, weights: weights.to_vec(), radii: weights.iter().map(|w| gamma * w).collect() })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Effective per-edge radii `gamma * w_e`.
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn num_edges(&self) -> usize {
        self.weights.len()
    }

    fn check(&self, u: &Mat, context: &'static str) -> Result<()> {
        if u.cols() != self.num_edges() {
            return Err(shape_err(context, format!("{} columns", self.num_edges()), u.cols()));
        }
        Ok(())
    }

    /// `p(U) = gamma * sum_e w_e ||U_e||`.
    pub fn value(&self, u: &EdgeMatrix) -> Result<f64> {
        self.check(u, "WeightedNormSpec::value")?;
        Ok(u.columns().zip(&self.radii).map(|(c, r)| r * norm2(c)).sum())
    }
}

/// Shrinks `x` toward zero by `t` in Euclidean norm; zero when `||x|| <= t`.
#[inline]
pub(crate) fn shrink_l2_in_place(x: &mut [f64], t: f64) {
    let nrm = norm2(x);
    if nrm <= t {
        x.fill(0.0);
    } else {
        let f = 1.0 - t / nrm;
        x.iter_mut().for_each(|v| *v *= f);
    }
}

/// Rescales `x` onto the ball of radius `r` if it lies outside.
#[inline]
pub(crate) fn project_ball_in_place(x: &mut [f64], r: f64) {
    let nrm = norm2(x);
    if nrm > r * (1.0 + BALL_SLACK) {
        let f = r / nrm;
        x.iter_mut().for_each(|v| *v *= f);
    }
}

/// Blockwise soft-thresholding: `Prox_{t ||.||_2}(x) = [1 - t/||x||]_+ x`.
pub fn prox_l2_block(x: &[f64], t: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    shrink_l2_in_place(&mut out, t);
    out
}

/// Elementwise soft-thresholding: `Prox_{t ||.||_1}`.
pub fn prox_l1(x: &[f64], t: f64) -> Vec<f64> {
    x.iter().map(|&v| v.signum() * (v.abs() - t).max(0.0)).map(|v| if v == 0.0 { 0.0 } else { v }).collect()
}

/// Euclidean projection onto `{u : ||u||_1 <= r}` by sorting magnitudes.
pub fn project_l1_ball(x: &[f64], r: f64) -> Vec<f64> {
    if x.iter().map(|v| v.abs()).sum::<f64>() <= r {
        return x.to_vec();
    }
    let mut mags: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    mags.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &m) in mags.iter().enumerate() {
        cumsum += m;
        let candidate = (cumsum - r) / (k + 1) as f64;
        if m > candidate {
            theta = candidate;
        } else {
            break;
        }
    }
    x.iter().map(|&v| v.signum() * (v.abs() - theta).max(0.0)).collect()
}

/// `Prox_{t ||.||_inf}(x) = x - P_{tS}(x)`, `S` the unit l1-ball.
pub fn prox_linf(x: &[f64], t: f64) -> Vec<f64> {
    let p = project_l1_ball(x, t);
    x.iter().zip(p).map(|(a, b)| a - b).collect()
}

/// `Prox_{t p}(U)`: column `e` is block-soft-thresholded at `t * gamma * w_e`.
pub fn prox_p(u: &EdgeMatrix, t: f64, spec: &WeightedNormSpec) -> Result<EdgeMatrix> {
    spec.check(u, "prox_p")?;
    let mut out = u.clone();
    let radii = spec.radii();
    out.par_columns_mut(2 * u.rows(), |e, col| shrink_l2_in_place(col, t * radii[e]));
    Ok(out)
}

/// Projection onto `Omega`: each column is pulled onto its ball of radius
/// `gamma * w_e`.
pub fn project_omega(z: &EdgeMatrix, spec: &WeightedNormSpec) -> Result<EdgeMatrix> {
    spec.check(z, "project_omega")?;
    let mut out = z.clone();
    let radii = spec.radii();
    out.par_columns_mut(2 * z.rows(), |e, col| project_ball_in_place(col, radii[e]));
    Ok(out)
}

/// Residual of the Moreau decomposition
/// `||Prox_{tp}(x) + t Prox_{p*/t}(x/t) - x||`, with the conjugate prox
/// evaluated as a projection onto `Omega`.
pub fn prox_conjugate_check(x: &EdgeMatrix, t: f64, spec: &WeightedNormSpec) -> Result<f64> {
    let primal = prox_p(x, t, spec)?;
    let dual = project_omega(&x.scaled(1.0 / t), spec)?;
    let mut r = primal;
    r.axpy(t, &dual);
    Ok(r.dist(x))
}
