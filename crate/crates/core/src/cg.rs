//! Conjugate gradients for self-adjoint positive-definite operators on
//! `d x n` matrices (trace inner product).

use crate::error::{Error, Result};
use crate::linalg::Mat;

/// How a CG run ended.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Recurrence residual norm of the returned iterate.
    pub residual: f64,
    pub converged: bool,
}

/// Which iterate to return when `max_iter` is reached.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OnStall {
    /// The iterate with the smallest residual norm.
    BestResidual,
    /// The final iterate. Started from zero, every CG iterate has negative
    /// inner product with `-rhs`, so this keeps Newton directions descending
    /// even when the residual norm oscillates above its starting value.
    LastIterate,
}

/// Solves `op(x) = rhs` starting from the contents of `x`, stopping once the
/// residual norm drops to `tol_abs`. On hitting `max_iter` the iterate with
/// the smallest residual is left in `x` and `converged` is false.
pub fn conjugate_gradient<F>(op: F, rhs: &Mat, x: &mut Mat, tol_abs: f64, max_iter: usize) -> Result<CgOutcome>
where
    F: FnMut(&Mat, &mut Mat) -> Result<()>,
{
    conjugate_gradient_with(op, rhs, x, tol_abs, max_iter, OnStall::BestResidual, |_, _, _| {})
}

/// [`conjugate_gradient`] with a callback `monitor(iteration, x, residual)`
/// invoked after every update.
pub fn conjugate_gradient_monitored<F, M>(
    op: F,
    rhs: &Mat,
    x: &mut Mat,
    tol_abs: f64,
    max_iter: usize,
    monitor: M,
) -> Result<CgOutcome>
where
    F: FnMut(&Mat, &mut Mat) -> Result<()>,
    M: FnMut(usize, &Mat, f64),
{
    conjugate_gradient_with(op, rhs, x, tol_abs, max_iter, OnStall::BestResidual, monitor)
}

/// General form of [`conjugate_gradient`] with an explicit stall policy.
pub fn conjugate_gradient_with<F, M>(
    op: F,
    rhs: &Mat,
    x: &mut Mat,
    tol_abs: f64,
    max_iter: usize,
    on_stall: OnStall,
    monitor: M,
) -> Result<CgOutcome>
where
    F: FnMut(&Mat, &mut Mat) -> Result<()>,
    M: FnMut(usize, &Mat, f64),
{
    cg_core(op, None, rhs, x, tol_abs, max_iter, on_stall, monitor)
}

/// Conjugate gradients preconditioned by the positive diagonal `diag`
/// (entrywise, same shape as `rhs`). Termination still uses the
/// unpreconditioned residual norm.
pub fn preconditioned_cg<F>(
    op: F,
    diag: &Mat,
    rhs: &Mat,
    x: &mut Mat,
    tol_abs: f64,
    max_iter: usize,
    on_stall: OnStall,
) -> Result<CgOutcome>
where
    F: FnMut(&Mat, &mut Mat) -> Result<()>,
{
    rhs.check_shape(diag, "preconditioned_cg diagonal")?;
    if diag.as_slice().iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::NumericalFailure("CG: preconditioner must be positive".into()));
    }
    cg_core(op, Some(diag), rhs, x, tol_abs, max_iter, on_stall, |_, _, _| {})
}

fn apply_inverse_diag(diag: Option<&Mat>, r: &Mat, z: &mut Mat) {
    match diag {
        Some(dg) => {
            for ((zv, rv), dv) in z.as_mut_slice().iter_mut().zip(r.as_slice()).zip(dg.as_slice()) {
                *zv = rv / dv;
            }
        }
        None => z.as_mut_slice().copy_from_slice(r.as_slice()),
    }
}

#[allow(clippy::too_many_arguments)]
fn cg_core<F, M>(
    mut op: F,
    diag: Option<&Mat>,
    rhs: &Mat,
    x: &mut Mat,
    tol_abs: f64,
    max_iter: usize,
    on_stall: OnStall,
    mut monitor: M,
) -> Result<CgOutcome>
where
    F: FnMut(&Mat, &mut Mat) -> Result<()>,
    M: FnMut(usize, &Mat, f64),
{
    rhs.check_shape(x, "conjugate_gradient")?;
    let mut ap = Mat::zeros(rhs.rows(), rhs.cols());

    let mut r = if x.norm_sq() == 0.0 {
        rhs.clone()
    } else {
        op(x, &mut ap)?;
        rhs.sub(&ap)
    };
    let mut res = r.norm();
    if !res.is_finite() {
        return Err(Error::NumericalFailure("CG: non-finite initial residual".into()));
    }
    if res <= tol_abs {
        return Ok(CgOutcome { iterations: 0, residual: res, converged: true });
    }

    let mut z = Mat::zeros(rhs.rows(), rhs.cols());
    apply_inverse_diag(diag, &r, &mut z);
    let mut rz = r.dot(&z);
    let mut p = z.clone();
    let mut best: Option<(f64, Mat)> = None;
    let mut best_res = res;
    for it in 1..=max_iter {
        op(&p, &mut ap)?;
        let pap = p.dot(&ap);
        if !pap.is_finite() {
            return Err(Error::NumericalFailure(format!("CG: non-finite curvature at iteration {it}")));
        }
        if pap <= 0.0 {
            return Err(Error::NumericalFailure(format!("CG: non-positive curvature {pap:e} at iteration {it}")));
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        res = r.norm();
        if !res.is_finite() {
            return Err(Error::NumericalFailure(format!("CG: non-finite residual at iteration {it}")));
        }
        monitor(it, x, res);
        if res <= tol_abs {
            return Ok(CgOutcome { iterations: it, residual: res, converged: true });
        }
        if res < best_res {
            best_res = res;
            best = None;
        } else if best.is_none() && on_stall == OnStall::BestResidual {
            // Residual went up; remember the previous (better) iterate.
            let mut prev = x.clone();
            prev.axpy(-alpha, &p);
            best = Some((best_res, prev));
        }
        apply_inverse_diag(diag, &r, &mut z);
        let rz_new = r.dot(&z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pv, zv) in p.as_mut_slice().iter_mut().zip(z.as_slice()) {
            *pv = zv + beta * *pv;
        }
    }

    let residual = match best {
        Some((best_res, prev)) if best_res < res && on_stall == OnStall::BestResidual => {
            *x = prev;
            best_res
        }
        _ => res,
    };
    Ok(CgOutcome { iterations: max_iter, residual, converged: false })
}
