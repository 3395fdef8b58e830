//! Conjugate gradient least squares (CGLS) for `min_x ||A x - b||_2`.

use super::LinOp;
use crate::error::{Error, Result};
use crate::util::{axpy, dot};

#[derive(Debug, Clone)]
pub struct CglsOptions {
    pub max_iter: usize,
    /// Stopping threshold on the normal-equation relative residual
    /// `||Aᵀ(b - A x)|| / ||Aᵀ b||`.
    pub tol: f64,
}

impl Default for CglsOptions {
    fn default() -> Self {
        CglsOptions {
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CglsResult {
    pub x: Vec<f64>,
    /// False when the iteration cap was reached before the tolerance;
    /// the best iterate is still returned.
    pub converged: bool,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solve `min ||A x - b||` starting from the zero vector.
pub fn cgls_solve(op: &dyn LinOp, rhs: &[f64], opts: &CglsOptions) -> Result<CglsResult> {
    let x0 = vec![0.0; op.cols()];
    cgls_solve_from(op, rhs, &x0, opts)
}

/// Solve `min ||A x - b||` from a warm start. The stopping rule is still
/// relative to `||Aᵀ b||` so the solution quality does not depend on the
/// start.
pub fn cgls_solve_from(
    op: &dyn LinOp,
    rhs: &[f64],
    x0: &[f64],
    opts: &CglsOptions,
) -> Result<CglsResult> {
    if rhs.len() != op.rows() {
        return Err(Error::dim("cgls rhs", op.rows(), rhs.len()));
    }
    if x0.len() != op.cols() {
        return Err(Error::dim("cgls start vector", op.cols(), x0.len()));
    }
    if opts.tol <= 0.0 {
        return Err(Error::invalid("cgls tol must be positive"));
    }

    let atb_norm = {
        let atb = op.apply_transpose_vec(rhs);
        dot(&atb, &atb).sqrt()
    };
    if atb_norm == 0.0 {
        // rhs is orthogonal to the range; the zero vector minimizes.
        return Ok(CglsResult {
            x: vec![0.0; op.cols()],
            converged: true,
            iterations: 0,
            relative_residual: 0.0,
        });
    }

    let mut x = x0.to_vec();
    let mut r = rhs.to_vec();
    let ax = op.apply_vec(&x);
    for (ri, a) in r.iter_mut().zip(&ax) {
        *ri -= a;
    }
    let mut s = op.apply_transpose_vec(&r);
    let mut p = s.clone();
    let mut gamma = dot(&s, &s);
    let mut relres = gamma.sqrt() / atb_norm;
    if relres <= opts.tol {
        return Ok(CglsResult {
            x,
            converged: true,
            iterations: 0,
            relative_residual: relres,
        });
    }

    let mut q = vec![0.0; op.rows()];
    let mut converged = false;
    let mut iterations = 0;
    for k in 1..=opts.max_iter {
        iterations = k;
        op.apply(&p, &mut q);
        let qq = dot(&q, &q);
        if qq == 0.0 {
            break;
        }
        let alpha = gamma / qq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        op.apply_transpose(&r, &mut s);
        let gamma_new = dot(&s, &s);
        relres = gamma_new.sqrt() / atb_norm;
        if relres <= opts.tol {
            converged = true;
            break;
        }
        let beta = gamma_new / gamma;
        for (pi, si) in p.iter_mut().zip(&s) {
            *pi = si + beta * *pi;
        }
        gamma = gamma_new;
    }

    Ok(CglsResult {
        x,
        converged,
        iterations,
        relative_residual: relres,
    })
}
