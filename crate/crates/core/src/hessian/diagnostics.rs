use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::{ScaledHessian, WoodburyPreconditioner};
use crate::error::{Error, Result};
use crate::solvers::{krylov_solve, KrylovMethod, KrylovOptions, LinearOperator};

/// Largest `2n` for which Hessians are materialized densely.
pub const DENSE_THRESHOLD: usize = 4096;

const POWER_ITERS: usize = 60;
const INVERSE_ITERS: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// 2-norm condition number of `H_S`.
    pub cond: f64,
    /// 2-norm condition number of `P·H_S`, when a preconditioner is given.
    pub cond_pre: Option<f64>,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub effective_rank: Option<usize>,
    pub kept: Option<usize>,
    /// False when the values are power-iteration estimates.
    pub exact: bool,
}

/// Conditioning of `H_S` and, optionally, of the preconditioned operator.
///
/// Dense spectra are used up to [`DENSE_THRESHOLD`]; above it extreme
/// singular values are estimated by power and inverse-power iteration.
pub fn condition_diagnostics(hs: &ScaledHessian<'_>, p: Option<&WoodburyPreconditioner>) -> Result<Diagnostics> {
    let dim = 2 * hs.n();
    let (sigma_min, sigma_max, cond_pre, exact) = if dim <= DENSE_THRESHOLD {
        let dense = hs.to_dense();
        let eig = SymmetricEigen::try_new(dense.clone(), f64::EPSILON, 100_000)
            .ok_or_else(|| Error::Decomposition("Hessian eigendecomposition did not converge".into()))?;
        let abs: Vec<f64> = eig.eigenvalues.iter().map(|v| v.abs()).collect();
        let smin = abs.iter().copied().fold(f64::INFINITY, f64::min);
        let smax = abs.iter().copied().fold(0.0, f64::max);
        let cond_pre = match p {
            Some(p) => {
                let mut ph = DMatrix::zeros(dim, dim);
                for (j, col) in dense.column_iter().enumerate() {
                    ph.set_column(j, &p.apply(&col.into_owned()));
                }
                let sv = ph.singular_values();
                let lo = sv.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = sv.iter().copied().fold(0.0, f64::max);
                Some(hi / lo)
            }
            None => None,
        };
        (smin, smax, cond_pre, true)
    } else {
        let smax = power_sigma_max(hs, None);
        let smin = inverse_sigma_min(hs, p)?;
        let cond_pre = match p {
            Some(p) => {
                let hi = power_sigma_max(hs, Some(p));
                let lo = preconditioned_sigma_min(hs, p)?;
                Some(hi / lo)
            }
            None => None,
        };
        (smin, smax, cond_pre, false)
    };
    Ok(Diagnostics {
        cond: sigma_max / sigma_min,
        cond_pre,
        sigma_min,
        sigma_max,
        effective_rank: p.map(|p| p.rank()),
        kept: p.map(|p| p.kept_columns().len()),
        exact,
    })
}

fn start_vector(dim: usize) -> DVector<f64> {
    let v = DVector::from_fn(dim, |i, _| 1.0 + ((i as f64) * 0.618_033_988_75).fract());
    let norm = v.norm();
    v / norm
}

/// Largest singular value of `H_S` or `P·H_S` by power iteration on the
/// normal operator.
fn power_sigma_max(hs: &ScaledHessian<'_>, p: Option<&WoodburyPreconditioner>) -> f64 {
    let forward = |v: &DVector<f64>| {
        let h = hs.apply(v);
        match p {
            Some(p) => p.apply(&h),
            None => h,
        }
    };
    let adjoint = |v: &DVector<f64>| match p {
        Some(p) => hs.apply(&p.apply(v)),
        None => hs.apply(v),
    };
    let mut v = start_vector(hs.dim());
    let mut sigma = 0.0;
    for _ in 0..POWER_ITERS {
        let w = adjoint(&forward(&v));
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        sigma = norm.sqrt();
        v = w / norm;
    }
    sigma
}

fn inverse_sigma_min(hs: &ScaledHessian<'_>, p: Option<&WoodburyPreconditioner>) -> Result<f64> {
    let kopts = KrylovOptions { method: KrylovMethod::Cgls, tol: 1e-8, max_iter: 2000 };
    let mut v = start_vector(hs.dim());
    let mut sigma = f64::INFINITY;
    for _ in 0..INVERSE_ITERS {
        let (w, _) = krylov_solve(hs, &v, None, p.map(|p| p as &dyn LinearOperator), &kopts)?;
        let norm = w.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Ok(0.0);
        }
        sigma = 1.0 / norm;
        v = w / norm;
    }
    Ok(sigma)
}

/// `(P H_S)^{-1} = H_S^{-1} (H_P + UUᵀ)`, so inverse iteration only needs
/// Hessian solves.
fn preconditioned_sigma_min(hs: &ScaledHessian<'_>, p: &WoodburyPreconditioner) -> Result<f64> {
    let kopts = KrylovOptions { method: KrylovMethod::Cgls, tol: 1e-8, max_iter: 2000 };
    let u = p.factor_padded();
    let inv_p = |v: &DVector<f64>| p.penalty().apply(v) + &u * (u.transpose() * v);
    let inv_forward =
        |v: &DVector<f64>| -> Result<DVector<f64>> { Ok(krylov_solve(hs, &inv_p(v), None, Some(p), &kopts)?.0) };
    // Power iteration on the inverse's normal operator would need its
    // adjoint; iterate on the inverse directly and take the growth rate.
    let mut v = start_vector(hs.dim());
    let mut sigma = f64::INFINITY;
    for _ in 0..INVERSE_ITERS {
        let w = inv_forward(&v)?;
        let norm = w.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Ok(0.0);
        }
        sigma = 1.0 / norm;
        v = w / norm;
    }
    Ok(sigma)
}
