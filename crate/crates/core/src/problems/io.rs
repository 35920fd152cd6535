use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Problem;

const MAGIC: &[u8; 8] = b"HPPROB01";
const HEADER: usize = 8 + 8 + 8 + 1 + 8;

/// A problem together with the configuration that generated it.
#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub problem: Problem,
    pub config: serde_json::Value,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `path` (binary) and a JSON sidecar next to it.
///
/// Layout, little endian: magic, `m: u64`, `n: u64`, `has_truth: u8`,
/// `sigma: f64`, then the operator row-major, the data and the optional
/// truth as `f64`.
pub fn save_problem(path: &Path, problem: &Problem, config: &serde_json::Value) -> Result<()> {
    let (m, n) = (problem.rows(), problem.dim());
    let truth = problem.truth();
    let mut buf = Vec::with_capacity(HEADER + 8 * (m * n + m + n));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(m as u64).to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.push(truth.is_some() as u8);
    buf.extend_from_slice(&problem.noise_sigma().to_le_bytes());
    let a = problem.operator();
    for i in 0..m {
        for j in 0..n {
            buf.extend_from_slice(&a[(i, j)].to_le_bytes());
        }
    }
    for v in problem.data().iter().chain(truth.into_iter().flat_map(|t| t.iter())) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    fs::write(sidecar(path), serde_json::to_vec_pretty(config)?)?;
    Ok(())
}

fn read_u64(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

fn read_f64(bytes: &[u8], at: usize) -> f64 {
    f64::from_le_bytes(bytes[at..at + 8].try_into().expect("8 bytes"))
}

pub fn load_problem(path: &Path) -> Result<ProblemFile> {
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER || &bytes[..8] != MAGIC {
        return Err(Error::Format(format!("{}: not a problem file", path.display())));
    }
    let m = read_u64(&bytes, 8) as usize;
    let n = read_u64(&bytes, 16) as usize;
    let has_truth = match bytes[24] {
        0 => false,
        1 => true,
        b => return Err(Error::Format(format!("bad truth flag {b}"))),
    };
    let sigma = read_f64(&bytes, 25);
    let count = m
        .checked_mul(n)
        .and_then(|mn| mn.checked_add(m))
        .and_then(|c| c.checked_add(if has_truth { n } else { 0 }))
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let expected = HEADER + 8 * count;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "{}: {m}x{n} problem needs {expected} bytes, file has {}",
            path.display(),
            bytes.len()
        )));
    }
    let mut at = HEADER;
    let mut next = || {
        let v = read_f64(&bytes, at);
        at += 8;
        v
    };
    let operator = DMatrix::from_row_iterator(m, n, (0..m * n).map(|_| next()));
    let data = DVector::from_iterator(m, (0..m).map(|_| next()));
    let truth = has_truth.then(|| DVector::from_iterator(n, (0..n).map(|_| next())));
    let config = serde_json::from_slice(&fs::read(sidecar(path))?)?;
    Ok(ProblemFile { problem: Problem::new(operator, data, truth, sigma)?, config })
}
