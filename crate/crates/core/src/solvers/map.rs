use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ias_step, newton_step, IasMode, LinearOperator, PhaseTimes, SolverOptions};
use crate::error::Result;
use crate::hessian::{assemble_scaled_hessian, build_preconditioner};
use crate::model::{gradient, objective, optimal_theta, HyperParameters, Problem, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    Ias,
    InexactIas,
    /// `ias_steps` IAS sweeps followed by Newton steps.
    IasThenNewton {
        ias_steps: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Start,
    Ias,
    InexactIas,
    Newton,
    /// Exact IAS sweep substituted for a Newton step that made no progress.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub kind: StepKind,
    pub objective: f64,
    pub grad_norm: f64,
    pub krylov_iterations: usize,
}

#[derive(Debug, Clone)]
pub struct MapResult {
    pub state: State,
    /// Entry 0 is the initial point.
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub times: PhaseTimes,
}

impl MapResult {
    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }
}

/// `x = 1`, `θ` optimal for that `x`.
pub fn initial_state(hyper: &HyperParameters) -> Result<State> {
    let x = DVector::from_element(hyper.dim(), 1.0);
    let theta = optimal_theta(&x, hyper)?;
    State::from_theta(x, theta)
}

/// MAP estimate at fixed hyperparameters.
///
/// Stops once `‖∇G‖₂ ≤ newton_tol` or after `max_iterations` steps, in which
/// case the last state is returned with `converged = false`.
pub fn map_estimate(
    problem: &Problem,
    hyper: &HyperParameters,
    strategy: Strategy,
    init: Option<&State>,
    opts: &SolverOptions,
) -> Result<MapResult> {
    opts.validate()?;
    let total = Instant::now();
    let mut times = PhaseTimes::default();
    let mut state = match init {
        Some(s) => s.clone(),
        None => initial_state(hyper)?,
    };
    let grad_norm = |s: &State| gradient(s, hyper, problem).map(|g| g.norm());
    let mut history = vec![IterationRecord {
        iteration: 0,
        kind: StepKind::Start,
        objective: objective(&state, hyper, problem)?,
        grad_norm: grad_norm(&state)?,
        krylov_iterations: 0,
    }];
    let mut warm: Option<DVector<f64>> = None;
    let mut stalled = 0;

    while history.len() <= opts.max_iterations {
        let last = history.last().expect("nonempty");
        if last.grad_norm <= opts.newton_tol {
            break;
        }
        let k = history.len() - 1;
        let use_newton = matches!(strategy, Strategy::IasThenNewton { ias_steps } if k >= ias_steps);
        let (next, kind, krylov) = if use_newton {
            let clock = Instant::now();
            let hs = assemble_scaled_hessian(&state, hyper, problem)?;
            let precond = build_preconditioner(&hs, opts.epsilon).ok();
            times.precondition += PhaseTimes::secs(clock.elapsed());
            let out = newton_step(
                &state,
                hyper,
                problem,
                precond.as_ref().map(|p| p as &dyn LinearOperator),
                warm.as_ref(),
                opts,
            )?;
            times.accumulate(&PhaseTimes { total: 0.0, ..out.times });
            if out.progress {
                warm = Some(out.scaled_direction);
                (out.state, StepKind::Newton, out.report.iterations)
            } else {
                warm = None;
                let clock = Instant::now();
                let (s, rep) = ias_step(&state, hyper, problem, IasMode::Exact, opts)?;
                times.krylov += PhaseTimes::secs(clock.elapsed());
                (s, StepKind::Fallback, out.report.iterations + rep.iterations)
            }
        } else {
            let mode = if strategy == Strategy::InexactIas { IasMode::Inexact } else { IasMode::Exact };
            let clock = Instant::now();
            let (s, rep) = ias_step(&state, hyper, problem, mode, opts)?;
            times.krylov += PhaseTimes::secs(clock.elapsed());
            let kind = if mode == IasMode::Exact { StepKind::Ias } else { StepKind::InexactIas };
            (s, kind, rep.iterations)
        };
        let record = IterationRecord {
            iteration: k + 1,
            kind,
            objective: objective(&next, hyper, problem)?,
            grad_norm: grad_norm(&next)?,
            krylov_iterations: krylov,
        };
        let unchanged = next == state;
        state = next;
        history.push(record);
        // Stop when repeated steps no longer move the iterate at all.
        stalled = if unchanged { stalled + 1 } else { 0 };
        if stalled >= 2 {
            break;
        }
    }
    let converged = history.last().expect("nonempty").grad_norm <= opts.newton_tol;
    times.total = PhaseTimes::secs(total.elapsed());
    Ok(MapResult { state, history, converged, times })
}
