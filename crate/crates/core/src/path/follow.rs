use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::trace::{Abort, PathTrace, StepRecord, TraceRow};
use super::{hyper_path_at, ode_rhs, predict, HyperPath, HyperRate};
use crate::error::{Error, Result};
use crate::hessian::{assemble_scaled_hessian, build_preconditioner, condition_diagnostics, WoodburyPreconditioner};
use crate::model::{gradient, objective, HyperParameters, Problem, State};
use crate::solvers::{
    ias_step, map_estimate, newton_step, IasMode, LinearOperator, PhaseTimes, SolverOptions, Strategy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    /// Euler predictor, Newton corrector.
    PredictorNewton,
    /// Euler predictor, exact IAS corrector.
    PredictorIas,
    /// Euler predictor without correction.
    PredictorOnly,
    /// Exact IAS at each new hyperparameter, no prediction.
    PathIas,
    /// Inexact IAS at each new hyperparameter, no prediction.
    PathInexactIas,
}

impl PathMode {
    pub fn predicts(self) -> bool {
        matches!(self, PathMode::PredictorNewton | PathMode::PredictorIas | PathMode::PredictorOnly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathOptions {
    pub mode: PathMode,
    /// Corrector iterations per time step. Newton stops early once its
    /// step is below `newton_tol`.
    pub correction_steps: usize,
    /// Condition numbers at every row (dense spectra for small problems).
    pub diagnostics: bool,
    /// Rebuild the preconditioner at every step rather than only after a
    /// solve exceeded `krylov_trigger` iterations.
    pub rebuild_every_step: bool,
    pub warm_start: bool,
    pub max_halvings: usize,
    /// Reject a step when the corrected energy exceeds the predicted one by
    /// more than this relative amount.
    pub rejection_tol: f64,
    /// `σ_min < bifurcation_tol · σ_max` marks the Hessian as singular.
    pub bifurcation_tol: f64,
    /// Strategy for the initial MAP estimate at `t = 0`.
    pub start: Strategy,
    pub solver: SolverOptions,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            mode: PathMode::PredictorNewton,
            correction_steps: 1,
            diagnostics: false,
            rebuild_every_step: true,
            warm_start: true,
            max_halvings: 5,
            rejection_tol: 0.1,
            bifurcation_tol: 1e-10,
            start: Strategy::IasThenNewton { ias_steps: 3 },
            solver: SolverOptions::default(),
        }
    }
}

impl PathOptions {
    pub fn with_mode(mode: PathMode) -> Self {
        Self { mode, ..Self::default() }
    }
}

enum Failure {
    Rejected,
    Fatal(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Fatal(e)
        } else {
            Failure::Rejected
        }
    }
}

/// Work done between two grid points, possibly over several sub-steps.
#[derive(Default)]
struct Accum {
    pred_norm: f64,
    corr_steps: usize,
    corr_norms: Vec<f64>,
    krylov: usize,
    rebuilt: bool,
    halvings: usize,
    rejected: usize,
    times: PhaseTimes,
}

struct Follower<'a> {
    problem: &'a Problem,
    path: &'a HyperPath,
    opts: &'a PathOptions,
    n: usize,
    /// Preconditioner for the current accepted point.
    precond: Option<WoodburyPreconditioner>,
    ode_warm: Option<DVector<f64>>,
    newton_warm: Option<DVector<f64>>,
    last_krylov: usize,
    bifurcation: bool,
}

fn as_op(p: &Option<WoodburyPreconditioner>) -> Option<&dyn LinearOperator> {
    p.as_ref().map(|p| p as &dyn LinearOperator)
}

impl<'a> Follower<'a> {
    fn hyper(&self, t: f64) -> Result<HyperParameters> {
        hyper_path_at(self.path, t, self.n)
    }

    fn build(&self, state: &State, hyper: &HyperParameters, acc: &mut Accum) -> Result<Option<WoodburyPreconditioner>> {
        let clock = Instant::now();
        let hs = assemble_scaled_hessian(state, hyper, self.problem)?;
        let p = build_preconditioner(&hs, self.opts.solver.epsilon).ok();
        acc.times.precondition += PhaseTimes::secs(clock.elapsed());
        acc.rebuilt = true;
        Ok(p)
    }

    fn needs_rebuild(&self) -> bool {
        self.opts.rebuild_every_step || self.last_krylov > self.opts.solver.krylov_trigger
    }

    /// One predictor-corrector step from `a` to `b`.
    fn attempt(
        &mut self,
        state: &State,
        a: f64,
        b: f64,
        rate: &HyperRate,
        fresh: bool,
        acc: &mut Accum,
    ) -> std::result::Result<State, Failure> {
        let opts = &self.opts.solver;
        let hyper_b = self.hyper(b)?;
        let dt = b - a;
        let mut local = Accum::default();

        let predicted = if self.opts.mode.predicts() && !(fresh && self.bifurcation) {
            let hyper_a = self.hyper(a)?;
            // At a grid point the preconditioner built by `record` is current.
            let p_a = if fresh { self.precond.take() } else { self.build(state, &hyper_a, &mut local)? };
            let clock = Instant::now();
            let warm = if self.opts.warm_start { self.ode_warm.take() } else { None };
            let ode = ode_rhs(state, &hyper_a, rate, self.problem, as_op(&p_a), warm.as_ref(), opts);
            self.precond = p_a;
            let ode = ode?;
            local.times.krylov += PhaseTimes::secs(clock.elapsed());
            local.krylov += ode.report.iterations;
            self.last_krylov = ode.report.iterations;
            local.pred_norm += ode.dz_dt.norm() * dt;
            self.ode_warm = Some(ode.scaled);
            predict(state, &ode.dz_dt, dt)?
        } else {
            state.clone()
        };

        let mut current = predicted.clone();
        match self.opts.mode {
            PathMode::PredictorNewton => {
                let mut own = None;
                for _ in 0..self.opts.correction_steps {
                    // Each iterate gets its own check; corrections can move far
                    // from where the last preconditioner was built.
                    if self.needs_rebuild() {
                        own = Some(self.build(&current, &hyper_b, &mut local)?);
                    }
                    let p_b = match &own {
                        Some(p) => p.as_ref(),
                        None => self.precond.as_ref(),
                    };
                    let warm = if self.opts.warm_start { self.newton_warm.clone() } else { None };
                    let out = newton_step(
                        &current,
                        &hyper_b,
                        self.problem,
                        p_b.map(|p| p as &dyn LinearOperator),
                        warm.as_ref(),
                        opts,
                    )?;
                    local.times.accumulate(&PhaseTimes { total: 0.0, ..out.times });
                    local.krylov += out.report.iterations;
                    self.last_krylov = out.report.iterations;
                    local.corr_steps += 1;
                    let next = if out.progress {
                        self.newton_warm = Some(out.scaled_direction);
                        out.state
                    } else {
                        self.newton_warm = None;
                        let (s, rep) = ias_step(&current, &hyper_b, self.problem, IasMode::Exact, opts)?;
                        local.krylov += rep.iterations;
                        s
                    };
                    local.corr_norms.push((next.stacked() - current.stacked()).norm());
                    current = next;
                    if out.step_norm <= opts.newton_tol {
                        break;
                    }
                }
            }
            PathMode::PredictorIas | PathMode::PathIas | PathMode::PathInexactIas => {
                let mode = if self.opts.mode == PathMode::PathInexactIas { IasMode::Inexact } else { IasMode::Exact };
                for _ in 0..self.opts.correction_steps {
                    let clock = Instant::now();
                    let (s, rep) = ias_step(&current, &hyper_b, self.problem, mode, opts)?;
                    local.times.krylov += PhaseTimes::secs(clock.elapsed());
                    local.krylov += rep.iterations;
                    local.corr_steps += 1;
                    local.corr_norms.push((s.stacked() - current.stacked()).norm());
                    current = s;
                }
            }
            PathMode::PredictorOnly => {}
        }

        let g_pred = objective(&predicted, &hyper_b, self.problem)?;
        let g_corr = objective(&current, &hyper_b, self.problem)?;
        if !(g_corr <= g_pred + self.opts.rejection_tol * g_pred.abs()) {
            return Err(Failure::Rejected);
        }
        // A corrected point worse than not moving at all means the step overshot.
        if self.opts.mode.predicts() && self.opts.mode != PathMode::PredictorOnly {
            let g_stay = objective(state, &hyper_b, self.problem)?;
            if !(g_corr <= g_stay + self.opts.rejection_tol * g_stay.abs()) {
                return Err(Failure::Rejected);
            }
        }
        acc.pred_norm += local.pred_norm;
        acc.corr_steps += local.corr_steps;
        acc.corr_norms.extend(local.corr_norms);
        acc.krylov += local.krylov;
        acc.rebuilt |= local.rebuilt;
        acc.times.accumulate(&local.times);
        Ok(current)
    }

    fn advance(
        &mut self,
        state: &State,
        a: f64,
        b: f64,
        rate: &HyperRate,
        depth: usize,
        acc: &mut Accum,
    ) -> Result<State> {
        match self.attempt(state, a, b, rate, depth == 0, acc) {
            Ok(s) => Ok(s),
            Err(Failure::Fatal(e)) => Err(e),
            Err(Failure::Rejected) => {
                if depth >= self.opts.max_halvings {
                    return Err(Error::PathAborted { t: a, halvings: depth });
                }
                acc.rejected += 1;
                acc.halvings = acc.halvings.max(depth + 1);
                self.ode_warm = None;
                self.newton_warm = None;
                let mid = 0.5 * (a + b);
                let s = self.advance(state, a, mid, rate, depth + 1, acc)?;
                self.advance(&s, mid, b, rate, depth + 1, acc)
            }
        }
    }

    /// Row for an accepted point; refreshes the preconditioner there.
    fn record(&mut self, state: &State, t: f64, mut acc: Accum) -> Result<(TraceRow, StepRecord)> {
        let hyper = self.hyper(t)?;
        let clock = Instant::now();
        let g = objective(state, &hyper, self.problem)?;
        let grad_norm = gradient(state, &hyper, self.problem)?.norm();
        acc.times.assembly += PhaseTimes::secs(clock.elapsed());
        if (self.opts.mode.predicts() || self.opts.diagnostics) && (self.needs_rebuild() || self.precond.is_none()) {
            self.precond = self.build(state, &hyper, &mut acc)?;
        }
        let (mut cond_raw, mut cond_pre, mut sigma_min) = (None, None, None);
        self.bifurcation = false;
        if self.opts.diagnostics {
            let hs = assemble_scaled_hessian(state, &hyper, self.problem)?;
            if let Ok(d) = condition_diagnostics(&hs, self.precond.as_ref()) {
                let finite = |v: f64| v.is_finite().then_some(v);
                cond_raw = finite(d.cond);
                cond_pre = d.cond_pre.and_then(finite);
                sigma_min = finite(d.sigma_min);
                self.bifurcation = d.sigma_min < self.opts.bifurcation_tol * d.sigma_max;
            }
        }
        let w = self.path.point_at(t)?;
        acc.times.total = acc.times.precondition + acc.times.krylov + acc.times.assembly + acc.times.backtrack;
        let row = TraceRow {
            t,
            r: w.r,
            eta: w.eta,
            vartheta: w.vartheta,
            objective: g,
            grad_norm,
            pred_step_norm: acc.pred_norm,
            corr_steps: acc.corr_steps,
            krylov_iters: acc.krylov,
            precond_rebuilt: acc.rebuilt,
            kept_cols: self.precond.as_ref().map(|p| p.kept_columns().len()),
            eff_rank: self.precond.as_ref().map(|p| p.rank()),
            cond_raw,
            cond_pre,
            sigma_min,
        };
        let detail = StepRecord {
            x: state.x().as_slice().to_vec(),
            theta: state.theta().as_slice().to_vec(),
            bifurcation: self.bifurcation,
            halvings: acc.halvings,
            rejected: acc.rejected,
            corr_step_norms: acc.corr_norms,
            times: acc.times,
        };
        Ok((row, detail))
    }
}

/// Traces MAP minimizers along `path`.
///
/// The starting point is the MAP estimate at `t = 0`, computed with
/// `opts.start` from `init` (or the default initial state). Each grid
/// step then predicts with an Euler step on the path ODE and corrects
/// according to `opts.mode`. A rejected step is split in halves, up to
/// `max_halvings` deep; past that the trace ends with `aborted` set.
pub fn follow_path(problem: &Problem, path: &HyperPath, init: Option<&State>, opts: &PathOptions) -> Result<PathTrace> {
    opts.solver.validate()?;
    let n = problem.dim();
    let mut f = Follower {
        problem,
        path,
        opts,
        n,
        precond: None,
        ode_warm: None,
        newton_warm: None,
        last_krylov: 0,
        bifurcation: false,
    };
    let hyper0 = f.hyper(0.0)?;
    let start = map_estimate(problem, &hyper0, opts.start, init, &opts.solver)?;
    let mut acc = Accum { times: start.times, ..Accum::default() };
    acc.corr_steps = start.iterations();
    acc.krylov = start.history.iter().map(|h| h.krylov_iterations).sum();
    let mut state = start.state;
    let (row, detail) = f.record(&state, 0.0, acc)?;
    let mut trace = PathTrace { mode: opts.mode, rows: vec![row], steps: vec![detail], aborted: None };

    for step in path.grid() {
        let rate = path.rate_on(step.segment);
        let mut acc = Accum::default();
        match f.advance(&state, step.t0, step.t1, &rate, 0, &mut acc) {
            Ok(s) => state = s,
            Err(Error::PathAborted { t, halvings }) => {
                trace.aborted = Some(Abort { t, halvings });
                break;
            }
            Err(e) => return Err(e),
        }
        let (row, detail) = f.record(&state, step.t1, acc)?;
        trace.rows.push(row);
        trace.steps.push(detail);
    }
    Ok(trace)
}
