//! Experiment driver: TOML configuration, the five study modes and their
//! output files.
//!
//! Every run writes into the output directory:
//!
//! | mode        | files                                                    |
//! |-------------|----------------------------------------------------------|
//! | all         | `problem.bin`, `problem.json`, `config.toml`, `timing.csv` |
//! | `solve`     | `solve.json`, `history.csv`                              |
//! | `follow`    | `trace.csv`, `trace.json`                                |
//! | `diagnose`  | `diagnose.csv`, `diagnose.json`                          |
//! | `envelope`  | `envelope.json`, `envelope.csv`                          |
//! | `threepath` | `path{1,2,3}.csv`, `threepath.json`                      |
//!
//! Trace CSVs have the columns of [`crate::path::CSV_COLUMNS`]. Failures
//! write `error.json`.

mod config;
mod experiments;
mod output;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HyperParameters, Problem, State};
use crate::path::{follow_path, HyperPath, PathTrace};
use crate::problems::{build_deconvolution, build_impulse_image, save_problem, ImageConfig};
use crate::solvers::{map_estimate, IterationRecord, PhaseTimes};

pub use config::{ExperimentConfig, HyperSection, PathSection, ProblemSection, RunMode, RunSection};
pub use experiments::{
    count_distinct, envelope, random_start, relative_distance, three_path, Envelope, Repetition, ThreePath,
};
pub use output::{
    exit_code, load_envelope_csv, load_history_csv, load_json, load_timing_csv, load_trace_csv, write_json,
    EnvelopeRow, ErrorRecord, TimingRow,
};

#[derive(Debug, Parser)]
#[command(name = "hierpath", version, about = "Hierarchical MAP estimation and hyperparameter path following")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides every seed in the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for envelope and three-path runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Use the 128² / 64² / 50-impulse image instead of the desk size.
    #[arg(long, global = true)]
    pub full_scale: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// MAP estimate at a fixed hyperparameter point.
    Solve,
    /// Follow a hyperparameter path.
    Follow,
    /// Random-start IAS runs at a fixed point.
    Envelope,
    /// The three two-segment paths with shared endpoints.
    Threepath,
    /// Path following with condition numbers at every step.
    Diagnose,
}

impl Command {
    pub fn mode(self) -> RunMode {
        match self {
            Command::Solve => RunMode::Solve,
            Command::Follow => RunMode::Follow,
            Command::Envelope => RunMode::Envelope,
            Command::Threepath => RunMode::Threepath,
            Command::Diagnose => RunMode::Diagnose,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutput {
    pub r: f64,
    pub eta: f64,
    pub vartheta: f64,
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
    pub times: PhaseTimes,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mode: RunMode,
    pub files: Vec<PathBuf>,
}

pub fn build_problem(section: &ProblemSection) -> Result<Problem> {
    match section {
        ProblemSection::Deconvolution(c) => build_deconvolution(c),
        ProblemSection::Image(c) => build_impulse_image(c),
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
    timing: Vec<TimingRow>,
}

impl Outputs<'_> {
    fn file(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.files.push(p.clone());
        p
    }

    fn trace(&mut self, stem: &str, trace: &PathTrace) -> Result<()> {
        let csv = self.file(&format!("{stem}.csv"));
        output::write_trace_csv(&csv, &trace.rows)?;
        let json = self.file(&format!("{stem}.json"));
        write_json(&json, trace)?;
        self.timing.push(TimingRow::new(stem, &trace.total_times()));
        Ok(())
    }
}

fn aborted(trace: &PathTrace) -> Result<()> {
    match trace.aborted {
        Some(a) => Err(Error::PathAborted { t: a.t, halvings: a.halvings }),
        None => Ok(()),
    }
}

/// Runs one experiment and writes its outputs into `out`.
///
/// A path that had to be aborted still writes its partial trace before the
/// error is returned.
pub fn run(config: &ExperimentConfig, mode: RunMode, out: &Path) -> Result<RunSummary> {
    config.validate(mode)?;
    std::fs::create_dir_all(out)?;
    let problem = build_problem(&config.problem)?;
    let n = problem.dim();
    let mut o = Outputs { dir: out, files: Vec::new(), timing: Vec::new() };
    let bin = o.file("problem.bin");
    o.files.push(bin.with_extension("json"));
    save_problem(&bin, &problem, &serde_json::to_value(&config.problem)?)?;
    let cfg_path = o.file("config.toml");
    std::fs::write(&cfg_path, config.to_toml()?)?;
    let seed = config.run.seed.unwrap_or(config.problem.seed());

    let mut result = Ok(());
    match mode {
        RunMode::Solve => {
            let w = config.point(mode);
            let hyper = HyperParameters::with_scalar(w.r, w.eta, w.vartheta, n)?;
            let res = map_estimate(&problem, &hyper, config.run.strategy, None, &config.solver)?;
            let summary = SolveOutput {
                r: w.r,
                eta: w.eta,
                vartheta: w.vartheta,
                x: res.state.x().as_slice().to_vec(),
                theta: res.state.theta().as_slice().to_vec(),
                converged: res.converged,
                history: res.history.clone(),
                times: res.times,
            };
            let p = o.file("solve.json");
            write_json(&p, &summary)?;
            let p = o.file("history.csv");
            output::write_history_csv(&p, &res.history)?;
            o.timing.push(TimingRow::new("solve", &res.times));
        }
        RunMode::Follow | RunMode::Diagnose => {
            let trace = follow_path(&problem, &config.hyper_path(), None, &config.path_options(mode))?;
            let stem = if mode == RunMode::Follow { "trace" } else { "diagnose" };
            o.trace(stem, &trace)?;
            result = aborted(&trace);
        }
        RunMode::Envelope => {
            let w = config.point(mode);
            let hyper = HyperParameters::with_scalar(w.r, w.eta, w.vartheta, n)?;
            let r = &config.run;
            let env =
                envelope(&problem, &hyper, r.repetitions, r.envelope_iterations, r.distinct_tol, seed, &config.solver)?;
            let p = o.file("envelope.json");
            write_json(&p, &env)?;
            let rows: Vec<EnvelopeRow> = (0..n)
                .map(|j| EnvelopeRow {
                    component: j,
                    lower: env.lower[j],
                    upper: env.upper[j],
                    truth: problem.truth().map(|t| t[j]),
                })
                .collect();
            let p = o.file("envelope.csv");
            output::write_envelope_csv(&p, &rows)?;
            for rep in &env.repetitions {
                o.timing.push(TimingRow::new(format!("repetition{}", rep.index), &rep.times));
            }
        }
        RunMode::Threepath => {
            let steps = config.hyper.threepath_steps.unwrap_or(30);
            let paths = HyperPath::three_paths(steps);
            let res = three_path(&problem, &paths, &config.path_options(mode))?;
            for (i, t) in res.traces.iter().enumerate() {
                o.trace(&format!("path{}", i + 1), t)?;
            }
            let p = o.file("threepath.json");
            write_json(&p, &res)?;
            result = res.traces.iter().try_for_each(aborted);
        }
    }
    let t = o.file("timing.csv");
    output::write_timing_csv(&t, &o.timing)?;
    result.map(|_| RunSummary { mode, files: o.files })
}

/// Applies command-line overrides to a loaded configuration.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.problem.set_seed(seed);
        config.run.seed = Some(seed);
    }
    if cli.full_scale {
        match &mut config.problem {
            ProblemSection::Image(c) => {
                let full = ImageConfig::full();
                c.grid_side = full.grid_side;
                c.obs_side = full.obs_side;
                c.n_impulses = full.n_impulses;
            }
            ProblemSection::Deconvolution(_) => {
                return Err(Error::Config("--full-scale applies to image problems only".into()));
            }
        }
    }
    Ok(config)
}

/// Entry point behind `main`; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let outcome = (|| {
        let config = resolve_config(&cli)?;
        let mode = cli.command.mode();
        match cli.threads {
            Some(k) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(k)
                    .build()
                    .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
                pool.install(|| run(&config, mode, &cli.out))
            }
            None => run(&config, mode, &cli.out),
        }
    })();
    match outcome {
        Ok(summary) => {
            for f in &summary.files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            let record = ErrorRecord::from_error(&e);
            eprintln!("error: {e}");
            if std::fs::create_dir_all(&cli.out).is_ok() {
                let _ = write_json(&cli.out.join("error.json"), &record);
            }
            record.exit_code
        }
    }
}

/// Reads a trace JSON back into a final state.
pub fn trace_final_state(path: &Path) -> Result<State> {
    let trace: PathTrace = load_json(path)?;
    trace.final_state()
}
