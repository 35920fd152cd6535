use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{krylov_solve, KrylovMethod, KrylovOptions, LinearOperator, SolveReport, SolverOptions};
use crate::error::Result;
use crate::model::{optimal_theta, HyperParameters, Problem, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IasMode {
    Exact,
    Inexact,
}

/// `w ↦ D_θ^{1/2} AᵀA D_θ^{1/2} w + w`.
struct RidgeOperator<'a> {
    problem: &'a Problem,
    sqrt_theta: &'a DVector<f64>,
}

impl LinearOperator for RidgeOperator<'_> {
    fn dim(&self) -> usize {
        self.sqrt_theta.len()
    }

    fn apply(&self, w: &DVector<f64>) -> DVector<f64> {
        let scaled = w.component_mul(self.sqrt_theta);
        self.problem.normal_apply(&scaled).component_mul(self.sqrt_theta) + w
    }
}

/// One sweep of the alternating scheme: the Tikhonov update of `x` given
/// `θ`, then the optimal `θ` given the new `x`.
///
/// The `x` update is solved for `w = D_θ^{-1/2} x` with CG warm-started at
/// the current `x`. CG iterates decrease the quadratic monotonically, so
/// even a truncated solve never increases the energy.
pub fn ias_step(
    state: &State,
    hyper: &HyperParameters,
    problem: &Problem,
    mode: IasMode,
    opts: &SolverOptions,
) -> Result<(State, SolveReport)> {
    let sqrt_theta = state.theta().map(f64::sqrt);
    let op = RidgeOperator { problem, sqrt_theta: &sqrt_theta };
    let rhs = problem.apply_transpose(problem.data()).component_mul(&sqrt_theta);
    let w0 = state.x().component_div(&sqrt_theta);
    let kopts = match mode {
        IasMode::Exact => KrylovOptions { method: KrylovMethod::Cg, tol: opts.ias_tol, max_iter: opts.ias_max },
        IasMode::Inexact => {
            KrylovOptions { method: KrylovMethod::Cg, tol: opts.inexact_tol, max_iter: opts.inexact_max }
        }
    };
    let (w, report) = krylov_solve(&op, &rhs, Some(&w0), None, &kopts)?;
    let x = w.component_mul(&sqrt_theta);
    let theta = optimal_theta(&x, hyper)?;
    Ok((State::from_theta(x, theta)?, report))
}
