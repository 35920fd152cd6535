//! MAP estimation and solution-path tracking for sparse linear inverse
//! problems under Gaussian hierarchical priors with generalized gamma
//! hyperpriors.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: hyperparameters, the Gibbs energy, its gradient in
//!   `(x, log θ)` coordinates and the optimal variance map.
//! - [`hessian`]: scaled Hessian, penalty factorization, the screened
//!   low-rank Woodbury preconditioner and conditioning diagnostics.
//! - [`solvers`]: Krylov solves, IAS sweeps, damped Newton steps and
//!   fixed-hyperparameter MAP estimation.
//! - [`path`]: hyperparameter paths, the path ODE and the
//!   predictor-corrector driver.
//! - [`problems`]: the 1D deconvolution and impulse-image benchmarks.
//! - [`cli`]: configuration, experiment drivers and output files.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod hessian;
pub mod model;
pub mod path;
pub mod problems;
pub mod solvers;

pub use error::{Error, Result};
pub use hessian::{
    assemble_scaled_hessian, build_preconditioner, condition_diagnostics, penalty_inverse_apply, Diagnostics,
    PenaltyFactor, ScaledHessian, WoodburyPreconditioner,
};
pub use model::{
    eta_from_beta, gradient, objective, optimal_theta, theta_lower_bound, theta_update, HyperParameters, Problem, State,
};
pub use path::{
    follow_path, hyper_path_at, ode_rhs, predict, HyperPath, HyperRate, PathMode, PathOptions, PathTrace, TraceRow,
};
pub use solvers::{
    ias_step, krylov_solve, map_estimate, newton_step, IasMode, KrylovMethod, LinearOperator, MapResult, SolveReport,
    SolverOptions, Strategy,
};
