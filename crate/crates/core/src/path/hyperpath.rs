use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::HyperParameters;

/// A point `(r, η, ϑ)` with scalar `ϑ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Waypoint {
    pub r: f64,
    pub eta: f64,
    pub vartheta: f64,
}

impl Waypoint {
    pub const fn new(r: f64, eta: f64, vartheta: f64) -> Self {
        Self { r, eta, vartheta }
    }

    fn check(&self) -> Result<()> {
        HyperParameters::with_scalar(self.r, self.eta, self.vartheta, 1).map(|_| ())
    }
}

/// `d(r, η, ϑ)/dt` on one segment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HyperRate {
    pub dr: f64,
    pub deta: f64,
    pub dvartheta: f64,
}

impl HyperRate {
    pub fn is_zero(&self) -> bool {
        self.dr == 0.0 && self.deta == 0.0 && self.dvartheta == 0.0
    }
}

/// Piecewise-linear path through hyperparameter space.
///
/// Segment `i` joins waypoints `i` and `i + 1` and covers `t ∈ [i, i + 1]`,
/// so `T` equals the number of segments. Each segment is traversed in
/// `steps[i]` equal time steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPath", into = "RawPath")]
pub struct HyperPath {
    waypoints: Vec<Waypoint>,
    steps: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPath {
    waypoints: Vec<Waypoint>,
    steps: Vec<usize>,
}

impl TryFrom<RawPath> for HyperPath {
    type Error = Error;

    fn try_from(raw: RawPath) -> Result<Self> {
        HyperPath::new(raw.waypoints, raw.steps)
    }
}

impl From<HyperPath> for RawPath {
    fn from(p: HyperPath) -> Self {
        RawPath { waypoints: p.waypoints, steps: p.steps }
    }
}

/// One time step of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridStep {
    pub segment: usize,
    pub t0: f64,
    pub t1: f64,
}

impl HyperPath {
    pub fn new(waypoints: Vec<Waypoint>, steps: Vec<usize>) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::InvalidArgument("a path needs at least two waypoints".into()));
        }
        if steps.len() != waypoints.len() - 1 {
            return Err(Error::DimensionMismatch {
                what: "steps per segment",
                expected: waypoints.len() - 1,
                got: steps.len(),
            });
        }
        if steps.contains(&0) {
            return Err(Error::InvalidArgument("every segment needs at least one step".into()));
        }
        for w in &waypoints {
            w.check()?;
        }
        // Each branch of the valid region is convex, so a segment stays
        // valid iff its endpoints share a branch.
        for pair in waypoints.windows(2) {
            if (pair[0].r > 0.0) != (pair[1].r > 0.0) {
                return Err(Error::InvalidHyper("a path segment crosses r = 0".into()));
            }
        }
        Ok(Self { waypoints, steps })
    }

    /// Same hyperparameters throughout.
    pub fn constant(point: Waypoint, steps: usize) -> Result<Self> {
        Self::new(vec![point, point], vec![steps])
    }

    /// Straight line from the convex start to the sparse target of the
    /// deconvolution study.
    pub fn deconvolution(steps: usize) -> Self {
        Self::new(vec![CONVEX_START, SPARSE_END], vec![steps]).expect("valid path")
    }

    /// The three two-segment paths that change `r`, `η` or `ϑ` first.
    pub fn three_paths(steps_per_segment: usize) -> [Self; 3] {
        let s = CONVEX_START;
        let e = SPARSE_END;
        let mids = [
            Waypoint::new(e.r, s.eta, s.vartheta),
            Waypoint::new(s.r, e.eta, s.vartheta),
            Waypoint::new(s.r, s.eta, e.vartheta),
        ];
        mids.map(|m| Self::new(vec![s, m, e], vec![steps_per_segment; 2]).expect("valid path"))
    }

    pub fn waypoints(&self) -> &[Waypoint] {
        &self.waypoints
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn total_steps(&self) -> usize {
        self.steps.iter().sum()
    }

    pub fn t_end(&self) -> f64 {
        self.steps.len() as f64
    }

    fn segment_of(&self, t: f64) -> Result<usize> {
        if !(0.0..=self.t_end()).contains(&t) {
            return Err(Error::InvalidArgument(format!("t = {t} outside [0, {}]", self.t_end())));
        }
        Ok((t.floor() as usize).min(self.steps.len() - 1))
    }

    /// Waypoint interpolated at `t`.
    pub fn point_at(&self, t: f64) -> Result<Waypoint> {
        let i = self.segment_of(t)?;
        let (a, b) = (self.waypoints[i], self.waypoints[i + 1]);
        let s = t - i as f64;
        let lerp = |x: f64, y: f64| if s == 1.0 { y } else { x + s * (y - x) };
        Ok(Waypoint::new(lerp(a.r, b.r), lerp(a.eta, b.eta), lerp(a.vartheta, b.vartheta)))
    }

    pub fn rate_on(&self, segment: usize) -> HyperRate {
        let (a, b) = (self.waypoints[segment], self.waypoints[segment + 1]);
        HyperRate { dr: b.r - a.r, deta: b.eta - a.eta, dvartheta: b.vartheta - a.vartheta }
    }

    /// The equidistant time grid, step by step.
    pub fn grid(&self) -> Vec<GridStep> {
        let mut out = Vec::with_capacity(self.total_steps());
        for (segment, &k) in self.steps.iter().enumerate() {
            let base = segment as f64;
            for j in 0..k {
                let t0 = base + j as f64 / k as f64;
                let t1 = if j + 1 == k { base + 1.0 } else { base + (j + 1) as f64 / k as f64 };
                out.push(GridStep { segment, t0, t1 });
            }
        }
        out
    }
}

/// `(r, η, ϑ) = (1.5, 1.5, 1e-5)`.
pub const CONVEX_START: Waypoint = Waypoint::new(1.5, 1.5, 1e-5);
/// `(r, η, ϑ) = (0.5, 1e-5, 1e-6)`.
pub const SPARSE_END: Waypoint = Waypoint::new(0.5, 1e-5, 1e-6);

/// Hyperparameters at time `t`, with `ϑ` broadcast to `n` components.
pub fn hyper_path_at(path: &HyperPath, t: f64, n: usize) -> Result<HyperParameters> {
    let w = path.point_at(t)?;
    HyperParameters::with_scalar(w.r, w.eta, w.vartheta, n)
}
