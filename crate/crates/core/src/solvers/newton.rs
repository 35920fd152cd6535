use std::time::Instant;

use nalgebra::DVector;

use super::{krylov_solve, LinearOperator, PhaseTimes, SolveReport, SolverOptions};
use crate::error::Result;
use crate::hessian::assemble_scaled_hessian;
use crate::model::{gradient, objective, HyperParameters, Problem, State};

/// Relative size below which energy differences are treated as rounding.
const ROUNDING: f64 = 64.0 * f64::EPSILON;

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub state: State,
    pub report: SolveReport,
    /// `D^{-1} δz`, the solution of the scaled system; reusable as a warm start.
    pub scaled_direction: DVector<f64>,
    /// `‖δz‖` of the full (undamped) Newton direction.
    pub step_norm: f64,
    pub alpha: f64,
    pub backtracks: usize,
    /// False when no step length passed the acceptance test; `state` is then
    /// the input state.
    pub progress: bool,
    pub objective_before: f64,
    pub objective: f64,
    pub grad_norm_before: f64,
    pub times: PhaseTimes,
}

/// A damped Newton step on `G` in `(x, φ)` coordinates.
///
/// The system `H δz = −∇G` is solved as `H_S y = −D∇G`, `δz = D y`. Step
/// lengths shrink from `alpha_init` until the Armijo condition
/// `G(z + αδz) ≤ G(z) + c α ∇Gᵀδz` holds. When the predicted decrease is
/// below the rounding level of `G` the energy test cannot discriminate, and
/// a step is accepted if it does not raise `G` beyond rounding and reduces
/// the gradient norm.
pub fn newton_step(
    state: &State,
    hyper: &HyperParameters,
    problem: &Problem,
    precond: Option<&dyn LinearOperator>,
    warm: Option<&DVector<f64>>,
    opts: &SolverOptions,
) -> Result<NewtonOutcome> {
    let mut times = PhaseTimes::default();
    let clock = Instant::now();
    let g0 = objective(state, hyper, problem)?;
    let grad = gradient(state, hyper, problem)?;
    let grad_norm = grad.norm();
    let hs = assemble_scaled_hessian(state, hyper, problem)?;
    let d = hs.scaling();
    let rhs = -grad.component_mul(&d);
    times.assembly = PhaseTimes::secs(clock.elapsed());

    let clock = Instant::now();
    let (y, report) = krylov_solve(&hs, &rhs, warm, precond, &opts.hessian_krylov())?;
    times.krylov = PhaseTimes::secs(clock.elapsed());

    let dz = y.component_mul(&d);
    let slope = grad.dot(&dz);
    let step_norm = dz.norm();

    let clock = Instant::now();
    let mut alpha = opts.alpha_init;
    let mut accepted = None;
    let mut backtracks = 0;
    let round = ROUNDING * g0.abs().max(1.0);
    for k in 0..=opts.max_backtracks {
        backtracks = k;
        if let Ok(candidate) = state.step(&dz, alpha) {
            if let Ok(gc) = objective(&candidate, hyper, problem) {
                if slope < 0.0 && gc <= g0 + opts.armijo_c * alpha * slope {
                    accepted = Some((candidate, gc));
                    break;
                }
                if (opts.armijo_c * alpha * slope).abs() <= round && gc <= g0 + round {
                    let improves = gradient(&candidate, hyper, problem).map(|g| g.norm() < grad_norm).unwrap_or(false);
                    if improves {
                        accepted = Some((candidate, gc));
                        break;
                    }
                }
            }
        }
        alpha *= opts.armijo_shrink;
    }
    times.backtrack = PhaseTimes::secs(clock.elapsed());
    times.total = times.assembly + times.krylov + times.backtrack;

    let (new_state, new_g, progress, alpha) = match accepted {
        Some((s, g)) => (s, g, true, alpha),
        None => (state.clone(), g0, false, 0.0),
    };
    Ok(NewtonOutcome {
        state: new_state,
        report,
        scaled_direction: y,
        step_norm,
        alpha,
        backtracks,
        progress,
        objective_before: g0,
        objective: new_g,
        grad_norm_before: grad_norm,
        times,
    })
}
