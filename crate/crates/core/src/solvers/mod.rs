//! Linear solvers and fixed-hyperparameter MAP estimation.

mod ias;
mod krylov;
mod map;
mod newton;

use std::time::Duration;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ias::{ias_step, IasMode};
pub use krylov::{krylov_solve, KrylovMethod, KrylovOptions};
pub use map::{initial_state, map_estimate, IterationRecord, MapResult, StepKind, Strategy};
pub use newton::{newton_step, NewtonOutcome};

/// A square linear map on `R^dim`.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relative residual tolerance for Hessian solves.
    pub krylov_tol: f64,
    pub krylov_max: usize,
    /// Rebuild the preconditioner when the previous solve took more
    /// iterations than this.
    pub krylov_trigger: usize,
    /// Gradient-norm tolerance for convergence and Newton step-size tolerance.
    pub newton_tol: f64,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    pub alpha_init: f64,
    pub max_backtracks: usize,
    /// Relative residual for the exact IAS least-squares update.
    pub ias_tol: f64,
    pub ias_max: usize,
    /// Early-stopping rule for inexact IAS.
    pub inexact_tol: f64,
    pub inexact_max: usize,
    /// Screening / truncation tolerance of the Woodbury preconditioner.
    pub epsilon: f64,
    /// Iteration cap for `map_estimate`.
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            krylov_tol: 1e-10,
            krylov_max: 1000,
            krylov_trigger: 50,
            newton_tol: 1e-8,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            alpha_init: 1.0,
            max_backtracks: 30,
            ias_tol: 1e-12,
            ias_max: 2000,
            inexact_tol: 1e-2,
            inexact_max: 20,
            epsilon: 0.5,
            max_iterations: 500,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("krylov_tol", self.krylov_tol),
            ("newton_tol", self.newton_tol),
            ("ias_tol", self.ias_tol),
            ("inexact_tol", self.inexact_tol),
            ("alpha_init", self.alpha_init),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("armijo_c", self.armijo_c), ("armijo_shrink", self.armijo_shrink), ("epsilon", self.epsilon)]
        {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.krylov_max == 0 || self.ias_max == 0 || self.inexact_max == 0 {
            return Err(Error::InvalidArgument("iteration caps must be positive".into()));
        }
        Ok(())
    }

    pub(crate) fn hessian_krylov(&self) -> KrylovOptions {
        KrylovOptions { method: KrylovMethod::Cgls, tol: self.krylov_tol, max_iter: self.krylov_max }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final relative residual `‖op·y − rhs‖ / ‖rhs‖`.
    pub residual: f64,
    pub converged: bool,
    pub warm_started: bool,
    pub preconditioner_rebuilt: bool,
}

/// Wall time per algorithm phase, in seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub precondition: f64,
    pub krylov: f64,
    pub assembly: f64,
    pub backtrack: f64,
    pub total: f64,
}

impl PhaseTimes {
    pub fn accumulate(&mut self, other: &PhaseTimes) {
        self.precondition += other.precondition;
        self.krylov += other.krylov;
        self.assembly += other.assembly;
        self.backtrack += other.backtrack;
        self.total += other.total;
    }

    pub(crate) fn secs(d: Duration) -> f64 {
        d.as_secs_f64()
    }
}
