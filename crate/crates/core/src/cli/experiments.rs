use nalgebra::DVector;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{objective, optimal_theta, HyperParameters, Problem, State};
use crate::path::{follow_path, HyperPath, PathOptions, PathTrace};
use crate::problems::{stream_rng, Stream};
use crate::solvers::{map_estimate, PhaseTimes, SolverOptions, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repetition {
    pub index: usize,
    pub x: Vec<f64>,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    /// `‖x − truth‖₂` when the problem has a truth.
    pub error: Option<f64>,
    pub times: PhaseTimes,
    /// Objective after each iteration, starting with the initial point.
    #[serde(skip)]
    pub objectives: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub repetitions: Vec<Repetition>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Number of clusters of final states at the distinctness tolerance.
    pub distinct: usize,
}

impl Envelope {
    pub fn median_error(&self) -> Option<f64> {
        let mut e: Vec<f64> = self.repetitions.iter().filter_map(|r| r.error).collect();
        if e.is_empty() {
            return None;
        }
        e.sort_by(f64::total_cmp);
        let m = e.len() / 2;
        Some(if e.len() % 2 == 1 { e[m] } else { 0.5 * (e[m - 1] + e[m]) })
    }
}

/// Random start: `x ~ N(0, I)` from substream `Init + index`, `θ` optimal.
pub fn random_start(hyper: &HyperParameters, seed: u64, index: usize) -> Result<State> {
    let mut rng = stream_rng(seed, Stream::Init, index as u64);
    let x = DVector::from_fn(hyper.dim(), |_, _| StandardNormal.sample(&mut rng));
    let theta = optimal_theta(&x, hyper)?;
    State::from_theta(x, theta)
}

/// Greedy clustering; a state joins the first representative within `tol`.
pub fn count_distinct<'a>(states: impl IntoIterator<Item = &'a [f64]>, tol: f64) -> usize {
    let mut reps: Vec<&[f64]> = Vec::new();
    for s in states {
        let close = reps.iter().any(|r| r.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() <= tol);
        if !close {
            reps.push(s);
        }
    }
    reps.len()
}

/// IAS from `repetitions` random starts. Runs on the current rayon pool;
/// results are ordered by repetition index.
pub fn envelope(
    problem: &Problem,
    hyper: &HyperParameters,
    repetitions: usize,
    iterations: usize,
    distinct_tol: f64,
    seed: u64,
    opts: &SolverOptions,
) -> Result<Envelope> {
    let opts = SolverOptions { max_iterations: iterations, ..opts.clone() };
    let reps: Vec<Repetition> = (0..repetitions)
        .into_par_iter()
        .map(|index| {
            let start = random_start(hyper, seed, index)?;
            let res = map_estimate(problem, hyper, Strategy::Ias, Some(&start), &opts)?;
            let last = res.history.last().expect("nonempty");
            Ok(Repetition {
                index,
                x: res.state.x().as_slice().to_vec(),
                objective: objective(&res.state, hyper, problem)?,
                grad_norm: last.grad_norm,
                iterations: res.iterations(),
                error: problem.truth().map(|t| (res.state.x() - t).norm()),
                times: res.times,
                objectives: res.history.iter().map(|h| h.objective).collect(),
            })
        })
        .collect::<Result<_>>()?;
    let n = problem.dim();
    let mut lower = vec![f64::INFINITY; n];
    let mut upper = vec![f64::NEG_INFINITY; n];
    for r in &reps {
        for (j, v) in r.x.iter().enumerate() {
            lower[j] = lower[j].min(*v);
            upper[j] = upper[j].max(*v);
        }
    }
    let distinct = count_distinct(reps.iter().map(|r| r.x.as_slice()), distinct_tol);
    Ok(Envelope { repetitions: reps, lower, upper, distinct })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThreePath {
    pub traces: Vec<PathTrace>,
    /// `‖x_i − x_j‖ / max(‖x_i‖, ‖x_j‖)` for pairs (0,1), (0,2), (1,2).
    pub endpoint_distances: [f64; 3],
}

pub fn relative_distance(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        d / scale
    }
}

/// Follows each path concurrently; traces keep the input order.
pub fn three_path(problem: &Problem, paths: &[HyperPath; 3], opts: &PathOptions) -> Result<ThreePath> {
    let traces: Vec<PathTrace> =
        paths.par_iter().map(|p| follow_path(problem, p, None, opts)).collect::<Result<_>>()?;
    let end = |i: usize| traces[i].steps.last().expect("nonempty").x.clone();
    let (a, b, c) = (end(0), end(1), end(2));
    let endpoint_distances = [relative_distance(&a, &b), relative_distance(&a, &c), relative_distance(&b, &c)];
    Ok(ThreePath { traces, endpoint_distances })
}
