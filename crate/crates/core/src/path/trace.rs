use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::PathMode;
use crate::error::{Error, Result};
use crate::model::State;
use crate::solvers::PhaseTimes;

/// One CSV row; the field order is the column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub r: f64,
    pub eta: f64,
    pub vartheta: f64,
    pub objective: f64,
    pub grad_norm: f64,
    /// `Σ ‖dz/dt‖ Δt` over the (sub)steps that led to this row.
    pub pred_step_norm: f64,
    pub corr_steps: usize,
    pub krylov_iters: usize,
    pub precond_rebuilt: bool,
    pub kept_cols: Option<usize>,
    pub eff_rank: Option<usize>,
    pub cond_raw: Option<f64>,
    pub cond_pre: Option<f64>,
    pub sigma_min: Option<f64>,
}

pub const CSV_COLUMNS: [&str; 15] = [
    "t",
    "r",
    "eta",
    "vartheta",
    "objective",
    "grad_norm",
    "pred_step_norm",
    "corr_steps",
    "krylov_iters",
    "precond_rebuilt",
    "kept_cols",
    "eff_rank",
    "cond_raw",
    "cond_pre",
    "sigma_min",
];

/// Per-row detail kept out of the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    /// Prediction skipped because `H_S` was numerically singular.
    pub bifurcation: bool,
    /// Deepest interval halving used to reach this row.
    pub halvings: usize,
    pub rejected: usize,
    /// Norms of the accepted corrector updates in `(x, φ)`.
    pub corr_step_norms: Vec<f64>,
    pub times: PhaseTimes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Abort {
    pub t: f64,
    pub halvings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathTrace {
    pub mode: PathMode,
    pub rows: Vec<TraceRow>,
    pub steps: Vec<StepRecord>,
    /// Set when a step could not be completed; rows stop there.
    pub aborted: Option<Abort>,
}

impl PathTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn state(&self, i: usize) -> Result<State> {
        let s = &self.steps[i];
        State::from_theta(DVector::from_column_slice(&s.x), DVector::from_column_slice(&s.theta))
    }

    pub fn final_state(&self) -> Result<State> {
        self.state(self.rows.len() - 1)
    }

    pub fn total_times(&self) -> PhaseTimes {
        let mut t = PhaseTimes::default();
        for s in &self.steps {
            t.accumulate(&s.times);
        }
        t
    }

    pub fn total_krylov(&self) -> usize {
        self.rows.iter().map(|r| r.krylov_iters).sum()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_rows(&self.rows, w)
    }
}

pub fn write_rows<W: Write>(rows: &[TraceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if rows.is_empty() {
        out.write_record(CSV_COLUMNS).map_err(csv_error)?;
    }
    for row in rows {
        out.serialize(row).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_rows<R: Read>(r: R) -> Result<Vec<TraceRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers().map_err(csv_error)?;
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Format(format!("unexpected trace columns: {headers:?}")));
    }
    rdr.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}
