use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{read_rows, write_rows, TraceRow};
use crate::solvers::{IterationRecord, PhaseTimes};

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("csv: {e}"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

fn write_records<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn load_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

pub fn write_trace_csv(path: &Path, rows: &[TraceRow]) -> Result<()> {
    write_rows(rows, BufWriter::new(File::create(path)?))
}

pub fn load_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    read_rows(File::open(path)?)
}

pub fn write_history_csv(path: &Path, rows: &[IterationRecord]) -> Result<()> {
    write_records(path, rows)
}

pub fn load_history_csv(path: &Path) -> Result<Vec<IterationRecord>> {
    load_records(path)
}

/// One row of `timing.csv`, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub run: String,
    pub precondition: f64,
    pub krylov: f64,
    pub assembly: f64,
    pub backtrack: f64,
    pub total: f64,
}

impl TimingRow {
    pub fn new(run: impl Into<String>, t: &PhaseTimes) -> Self {
        Self {
            run: run.into(),
            precondition: t.precondition,
            krylov: t.krylov,
            assembly: t.assembly,
            backtrack: t.backtrack,
            total: t.total,
        }
    }
}

pub fn write_timing_csv(path: &Path, rows: &[TimingRow]) -> Result<()> {
    write_records(path, rows)
}

pub fn load_timing_csv(path: &Path) -> Result<Vec<TimingRow>> {
    load_records(path)
}

/// Per-component envelope bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub component: usize,
    pub lower: f64,
    pub upper: f64,
    pub truth: Option<f64>,
}

pub fn write_envelope_csv(path: &Path, rows: &[EnvelopeRow]) -> Result<()> {
    write_records(path, rows)
}

pub fn load_envelope_csv(path: &Path) -> Result<Vec<EnvelopeRow>> {
    load_records(path)
}

/// Machine-readable failure record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
    pub exit_code: i32,
}

impl ErrorRecord {
    pub fn from_error(e: &Error) -> Self {
        let kind = format!("{e:?}");
        let kind = kind.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string();
        Self { kind, message: e.to_string(), exit_code: exit_code(e) }
    }
}

/// 1 for invalid input, 2 for numerical failure.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_validation() {
        1
    } else {
        2
    }
}
