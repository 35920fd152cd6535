use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{HyperPath, PathMode, PathOptions, Waypoint, CONVEX_START, SPARSE_END};
use crate::problems::{DeconvolutionConfig, ImageConfig};
use crate::solvers::{SolverOptions, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Solve,
    Follow,
    Envelope,
    Threepath,
    Diagnose,
}

impl RunMode {
    pub fn name(self) -> &'static str {
        match self {
            RunMode::Solve => "solve",
            RunMode::Follow => "follow",
            RunMode::Envelope => "envelope",
            RunMode::Threepath => "threepath",
            RunMode::Diagnose => "diagnose",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProblemSection {
    Deconvolution(DeconvolutionConfig),
    Image(ImageConfig),
}

impl Default for ProblemSection {
    fn default() -> Self {
        ProblemSection::Deconvolution(DeconvolutionConfig::default())
    }
}

impl ProblemSection {
    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ProblemSection::Deconvolution(c) => c.seed = seed,
            ProblemSection::Image(c) => c.seed = seed,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ProblemSection::Deconvolution(c) => c.seed,
            ProblemSection::Image(c) => c.seed,
        }
    }
}

/// Hyperparameters: a fixed point for `solve`/`envelope`, a path for
/// `follow`/`diagnose`, and the per-segment step count for `threepath`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperSection {
    pub point: Option<Waypoint>,
    pub path: Option<HyperPath>,
    pub threepath_steps: Option<usize>,
}

/// Path-following knobs; the corrector is chosen in `[run]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    pub correction_steps: usize,
    pub diagnostics: Option<bool>,
    pub rebuild_every_step: bool,
    pub warm_start: bool,
    pub max_halvings: usize,
    pub rejection_tol: f64,
    pub bifurcation_tol: f64,
}

impl Default for PathSection {
    fn default() -> Self {
        let d = PathOptions::default();
        Self {
            correction_steps: d.correction_steps,
            diagnostics: None,
            rebuild_every_step: d.rebuild_every_step,
            warm_start: d.warm_start,
            max_halvings: d.max_halvings,
            rejection_tol: d.rejection_tol,
            bifurcation_tol: d.bifurcation_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Must agree with the subcommand when given.
    pub mode: Option<RunMode>,
    pub corrector: PathMode,
    /// Fixed-point strategy for `solve` and the path start.
    pub strategy: Strategy,
    pub repetitions: usize,
    /// IAS iterations per envelope repetition.
    pub envelope_iterations: usize,
    /// Final states farther apart than this (ℓ2) count as distinct.
    pub distinct_tol: f64,
    pub seed: Option<u64>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            mode: None,
            corrector: PathMode::PredictorNewton,
            strategy: Strategy::IasThenNewton { ias_steps: 3 },
            repetitions: 100,
            envelope_iterations: 200,
            distinct_tol: 1e-3,
            seed: None,
        }
    }
}

/// A complete experiment description, read from TOML.
///
/// Every section is optional; the defaults reproduce the deconvolution
/// study.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub hyper: HyperSection,
    pub solver: SolverOptions,
    pub path: PathSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks section consistency for `mode`.
    pub fn validate(&self, mode: RunMode) -> Result<()> {
        if let Some(m) = self.run.mode {
            if m != mode {
                return Err(Error::Config(format!(
                    "config run.mode = {} conflicts with subcommand {}",
                    m.name(),
                    mode.name()
                )));
            }
        }
        self.solver.validate()?;
        match &self.problem {
            ProblemSection::Deconvolution(c) => c.validate()?,
            ProblemSection::Image(c) => c.validate()?,
        }
        if mode == RunMode::Envelope && self.run.repetitions == 0 {
            return Err(Error::Config("envelope needs at least one repetition".into()));
        }
        if self.path.correction_steps == 0
            && matches!(self.run.corrector, PathMode::PredictorNewton | PathMode::PredictorIas)
        {
            return Err(Error::Config("correction_steps must be positive for a corrector".into()));
        }
        if self.hyper.threepath_steps == Some(0) {
            return Err(Error::Config("threepath_steps must be positive".into()));
        }
        Ok(())
    }

    pub fn point(&self, mode: RunMode) -> Waypoint {
        self.hyper.point.unwrap_or(match mode {
            RunMode::Envelope => SPARSE_END,
            _ => CONVEX_START,
        })
    }

    /// The configured path, or the straight deconvolution line with 60
    /// steps (8 for images).
    pub fn hyper_path(&self) -> HyperPath {
        self.hyper.path.clone().unwrap_or_else(|| {
            HyperPath::deconvolution(match self.problem {
                ProblemSection::Deconvolution(_) => 60,
                ProblemSection::Image(_) => 8,
            })
        })
    }

    pub fn path_options(&self, mode: RunMode) -> PathOptions {
        let p = &self.path;
        PathOptions {
            mode: self.run.corrector,
            correction_steps: p.correction_steps,
            diagnostics: p.diagnostics.unwrap_or(mode == RunMode::Diagnose),
            rebuild_every_step: p.rebuild_every_step,
            warm_start: p.warm_start,
            max_halvings: p.max_halvings,
            rejection_tol: p.rejection_tol,
            bifurcation_tol: p.bifurcation_tol,
            start: self.run.strategy,
            solver: self.solver.clone(),
        }
    }
}
