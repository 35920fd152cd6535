use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{LinearOperator, SolveReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KrylovMethod {
    /// CG on the normal equations `(KᵀK) w = Kᵀ r` of the right-preconditioned
    /// operator `K = op·P`. Works for symmetric indefinite `op` and any
    /// nonsingular symmetric `P`.
    Cgls,
    /// Plain preconditioned conjugate gradients; requires `op` and `P` SPD.
    Cg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovOptions {
    pub method: KrylovMethod,
    pub tol: f64,
    pub max_iter: usize,
}

/// Solves `op · y = rhs` starting from `x0`.
///
/// Returns the final iterate together with its true relative residual. A
/// zero denominator restarts once from zero; a second one is an error.
pub fn krylov_solve(
    op: &dyn LinearOperator,
    rhs: &DVector<f64>,
    x0: Option<&DVector<f64>>,
    precond: Option<&dyn LinearOperator>,
    opts: &KrylovOptions,
) -> Result<(DVector<f64>, SolveReport)> {
    let n = op.dim();
    if rhs.len() != n {
        return Err(Error::DimensionMismatch { what: "krylov rhs", expected: n, got: rhs.len() });
    }
    if let Some(x) = x0 {
        if x.len() != n {
            return Err(Error::DimensionMismatch { what: "krylov initial guess", expected: n, got: x.len() });
        }
    }
    let warm_started = x0.is_some_and(|x| x.iter().any(|v| *v != 0.0));
    let rhs_norm = rhs.norm();
    if rhs_norm == 0.0 {
        let report = SolveReport { iterations: 0, residual: 0.0, converged: true, warm_started, ..Default::default() };
        return Ok((DVector::zeros(n), report));
    }
    let start = x0.cloned().unwrap_or_else(|| DVector::zeros(n));
    let run = |x: DVector<f64>| match opts.method {
        KrylovMethod::Cgls => cgls(op, rhs, x, precond, opts, rhs_norm),
        KrylovMethod::Cg => cg(op, rhs, x, precond, opts, rhs_norm),
    };
    let (y, iterations) = match run(start) {
        Ok(out) => out,
        Err(Breakdown(first)) => match run(DVector::zeros(n)) {
            Ok((y, it)) => (y, it + first),
            Err(Breakdown(second)) => return Err(Error::KrylovBreakdown { iterations: first + second }),
        },
    };
    let residual = (rhs - op.apply(&y)).norm() / rhs_norm;
    let report = SolveReport {
        iterations,
        residual,
        converged: residual <= opts.tol,
        warm_started,
        preconditioner_rebuilt: false,
    };
    Ok((y, report))
}

struct Breakdown(usize);

fn apply_or_copy(p: Option<&dyn LinearOperator>, v: &DVector<f64>) -> DVector<f64> {
    match p {
        Some(p) => p.apply(v),
        None => v.clone(),
    }
}

/// Right-preconditioned CGLS. The iterate is `y = y0 + P w` and `w` is
/// accumulated implicitly through `y`.
fn cgls(
    op: &dyn LinearOperator,
    rhs: &DVector<f64>,
    mut y: DVector<f64>,
    precond: Option<&dyn LinearOperator>,
    opts: &KrylovOptions,
    rhs_norm: f64,
) -> std::result::Result<(DVector<f64>, usize), Breakdown> {
    let target = opts.tol * rhs_norm;
    let mut r = rhs - op.apply(&y);
    let mut iterations = 0;
    'restart: loop {
        if r.norm() <= target {
            return Ok((y, iterations));
        }
        // s = Kᵀ r = P op r
        let mut s = apply_or_copy(precond, &op.apply(&r));
        let mut p = s.clone();
        let mut gamma = s.norm_squared();
        while iterations < opts.max_iter {
            if gamma == 0.0 {
                // Least-squares stationary point; nothing further to gain.
                return Ok((y, iterations));
            }
            let pp = apply_or_copy(precond, &p);
            let q = op.apply(&pp);
            let delta = q.norm_squared();
            if delta == 0.0 || !delta.is_finite() {
                return Err(Breakdown(iterations));
            }
            let alpha = gamma / delta;
            y.axpy(alpha, &pp, 1.0);
            r.axpy(-alpha, &q, 1.0);
            iterations += 1;
            if r.norm() <= target {
                let true_r = rhs - op.apply(&y);
                if true_r.norm() <= target {
                    return Ok((y, iterations));
                }
                r = true_r;
                continue 'restart;
            }
            s = apply_or_copy(precond, &op.apply(&r));
            let gamma_next = s.norm_squared();
            let beta = gamma_next / gamma;
            gamma = gamma_next;
            p *= beta;
            p += &s;
        }
        return Ok((y, iterations));
    }
}

fn cg(
    op: &dyn LinearOperator,
    rhs: &DVector<f64>,
    mut y: DVector<f64>,
    precond: Option<&dyn LinearOperator>,
    opts: &KrylovOptions,
    rhs_norm: f64,
) -> std::result::Result<(DVector<f64>, usize), Breakdown> {
    let target = opts.tol * rhs_norm;
    let mut r = rhs - op.apply(&y);
    let mut iterations = 0;
    'restart: loop {
        if r.norm() <= target {
            return Ok((y, iterations));
        }
        let mut z = apply_or_copy(precond, &r);
        let mut p = z.clone();
        let mut rz = r.dot(&z);
        while iterations < opts.max_iter {
            let q = op.apply(&p);
            let pq = p.dot(&q);
            if !(pq > 0.0) || !pq.is_finite() {
                return Err(Breakdown(iterations));
            }
            let alpha = rz / pq;
            y.axpy(alpha, &p, 1.0);
            r.axpy(-alpha, &q, 1.0);
            iterations += 1;
            if r.norm() <= target {
                let true_r = rhs - op.apply(&y);
                if true_r.norm() <= target {
                    return Ok((y, iterations));
                }
                r = true_r;
                continue 'restart;
            }
            z = apply_or_copy(precond, &r);
            let rz_next = r.dot(&z);
            let beta = rz_next / rz;
            rz = rz_next;
            p *= beta;
            p += &z;
        }
        return Ok((y, iterations));
    }
}
