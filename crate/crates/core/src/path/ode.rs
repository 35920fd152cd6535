use nalgebra::DVector;

use super::HyperRate;
use crate::error::Result;
use crate::hessian::assemble_scaled_hessian;
use crate::model::{scaled_power, HyperParameters, Problem, State};
use crate::solvers::{krylov_solve, LinearOperator, SolveReport, SolverOptions};

/// Solution of the path ODE at one point.
#[derive(Debug, Clone)]
pub struct OdeSolution {
    /// `dz/dt` in `(x, φ)` coordinates.
    pub dz_dt: DVector<f64>,
    /// `D⁻¹ dz/dt`, the scaled unknown; pass back as the next warm start.
    pub scaled: DVector<f64>,
    pub report: SolveReport,
}

/// Velocity of the minimizer `z*(t)` when the hyperparameters move at
/// `rate`.
///
/// Differentiating `∇G(z*(t), ψ(t)) = 0` gives `H dz/dt = −∂_ψ∇G · dψ/dt`.
/// Only the `φ` block of `∂_ψ∇G` is nonzero:
///
/// ```text
/// ∂_r ∇_φG = ξ^r (1 + r log ξ),   ∂_η ∇_φG = −1,   ∂_ϑ ∇_φG = −r² ξ^r / ϑ,
/// ```
///
/// with `ξ = θ/ϑ`. The system is solved in scaled form `H_S y = D f`,
/// `dz/dt = D y`.
pub fn ode_rhs(
    state: &State,
    hyper: &HyperParameters,
    rate: &HyperRate,
    problem: &Problem,
    precond: Option<&dyn LinearOperator>,
    warm: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<OdeSolution> {
    let n = state.dim();
    let hs = assemble_scaled_hessian(state, hyper, problem)?;
    let r = hyper.r();
    let mut rhs = DVector::zeros(2 * n);
    if !rate.is_zero() {
        for j in 0..n {
            let vt = hyper.vartheta()[j];
            let phi = state.phi()[j];
            let xi_r = scaled_power(phi, vt, r);
            let log_xi = phi - vt.ln();
            let d_r = xi_r * (1.0 + r * log_xi);
            let d_vt = -r * r * xi_r / vt;
            rhs[n + j] = -(d_r * rate.dr - rate.deta + d_vt * rate.dvartheta);
        }
    }
    // The x block of the right-hand side is zero, so D f = f.
    let (y, report) = krylov_solve(&hs, &rhs, warm, precond, &opts.hessian_krylov())?;
    let dz_dt = y.component_mul(&hs.scaling());
    Ok(OdeSolution { dz_dt, scaled: y, report })
}

/// Euler step `z + Δt · dz/dt` in `(x, φ)` coordinates.
pub fn predict(state: &State, dz_dt: &DVector<f64>, dt: f64) -> Result<State> {
    if dt == 0.0 {
        return Ok(state.clone());
    }
    state.step(dz_dt, dt)
}
