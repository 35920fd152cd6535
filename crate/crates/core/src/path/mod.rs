//! Hyperparameter paths and predictor-corrector tracking of the MAP
//! solution along them.

mod follow;
mod hyperpath;
mod ode;
mod trace;

pub use follow::{follow_path, PathMode, PathOptions};
pub use hyperpath::{hyper_path_at, GridStep, HyperPath, HyperRate, Waypoint, CONVEX_START, SPARSE_END};
pub use ode::{ode_rhs, predict, OdeSolution};
pub use trace::{read_rows, write_rows, Abort, PathTrace, StepRecord, TraceRow, CSV_COLUMNS};
