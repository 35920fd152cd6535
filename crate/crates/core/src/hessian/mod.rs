//! Hessian of the Gibbs energy in `(x, φ)` coordinates.
//!
//! With `D = diag([√θ; 1])` the scaled Hessian `H_S = D H D` splits into a
//! fidelity part `H_A = [D_θ^{1/2} AᵀA D_θ^{1/2}, 0; 0, 0]` and a penalty part
//!
//! ```text
//! H_P = [ I     −c        ]      c = x / √θ
//!       [ −c    ½c² + κ   ]      κ = r² (θ/ϑ)^r
//! ```
//!
//! which is block-diagonal up to a permutation and factors as `RᵀSR` with
//! `R = [I, −c; 0, I]` and `S = diag(I, κ − ½c²)`.

mod diagnostics;
mod penalty;
mod woodbury;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{scaled_power, HyperParameters, Problem, State};
use crate::solvers::LinearOperator;

pub use diagnostics::{condition_diagnostics, Diagnostics, DENSE_THRESHOLD};
pub use penalty::{penalty_inverse_apply, PenaltyFactor};
pub use woodbury::{build_preconditioner, WoodburyPreconditioner};

/// Scaled Hessian `H_S` as a matrix-free operator.
#[derive(Debug, Clone)]
pub struct ScaledHessian<'a> {
    problem: &'a Problem,
    sqrt_theta: DVector<f64>,
    /// `x / √θ`; the off-diagonal block is `−c`.
    coupling: DVector<f64>,
    /// `r² (θ/ϑ)^r`.
    curvature: DVector<f64>,
}

pub fn assemble_scaled_hessian<'a>(
    state: &State,
    hyper: &HyperParameters,
    problem: &'a Problem,
) -> Result<ScaledHessian<'a>> {
    let n = problem.dim();
    if state.dim() != n || hyper.dim() != n {
        return Err(Error::DimensionMismatch { what: "hessian state", expected: n, got: state.dim() });
    }
    let r = hyper.r();
    let sqrt_theta = state.theta().map(f64::sqrt);
    let coupling = state.x().component_div(&sqrt_theta);
    let curvature =
        DVector::from_iterator(n, (0..n).map(|j| r * r * scaled_power(state.phi()[j], hyper.vartheta()[j], r)));
    if curvature.iter().chain(coupling.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scaled hessian"));
    }
    Ok(ScaledHessian { problem, sqrt_theta, coupling, curvature })
}

impl<'a> ScaledHessian<'a> {
    /// Number of signal components `n`; the operator acts on `R^{2n}`.
    pub fn n(&self) -> usize {
        self.sqrt_theta.len()
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn sqrt_theta(&self) -> &DVector<f64> {
        &self.sqrt_theta
    }

    pub fn coupling(&self) -> &DVector<f64> {
        &self.coupling
    }

    pub fn curvature(&self) -> &DVector<f64> {
        &self.curvature
    }

    /// Off-diagonal block entries `−x/√θ`.
    pub fn penalty_offdiag(&self) -> DVector<f64> {
        -&self.coupling
    }

    /// Lower-right block entries `½x²/θ + r²ϑ^{−r}θ^r`.
    pub fn penalty_corner(&self) -> DVector<f64> {
        self.coupling.zip_map(&self.curvature, |c, k| 0.5 * c * c + k)
    }

    /// Diagonal of `D = diag([√θ; 1])`, with `H_S = D H D`.
    pub fn scaling(&self) -> DVector<f64> {
        let n = self.n();
        let mut d = DVector::from_element(2 * n, 1.0);
        d.rows_mut(0, n).copy_from(&self.sqrt_theta);
        d
    }

    /// `D_θ^{1/2} AᵀA D_θ^{1/2} v` for `v ∈ R^n`.
    pub fn fidelity_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let scaled = v.component_mul(&self.sqrt_theta);
        self.problem.normal_apply(&scaled).component_mul(&self.sqrt_theta)
    }

    /// Dense `D_θ^{1/2} AᵀA D_θ^{1/2}`.
    pub fn fidelity_dense(&self) -> DMatrix<f64> {
        let g = self.problem.gram().to_dense();
        let d = &self.sqrt_theta;
        DMatrix::from_fn(self.n(), self.n(), |i, j| d[i] * g[(i, j)] * d[j])
    }

    pub fn penalty(&self) -> Result<PenaltyFactor> {
        PenaltyFactor::new(self.coupling.clone(), self.curvature.clone())
    }

    /// Dense `H_S`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut h = DMatrix::zeros(2 * n, 2 * n);
        h.view_mut((0, 0), (n, n)).copy_from(&self.fidelity_dense());
        for j in 0..n {
            let c = self.coupling[j];
            h[(j, j)] += 1.0;
            h[(j, n + j)] = -c;
            h[(n + j, j)] = -c;
            h[(n + j, n + j)] = 0.5 * c * c + self.curvature[j];
        }
        h
    }

    /// Dense unscaled Hessian `H = D^{-1} H_S D^{-1}` in `(x, φ)` coordinates.
    pub fn raw_dense(&self) -> DMatrix<f64> {
        let d = self.scaling();
        let mut h = self.to_dense();
        for i in 0..h.nrows() {
            for j in 0..h.ncols() {
                h[(i, j)] /= d[i] * d[j];
            }
        }
        h
    }
}

impl LinearOperator for ScaledHessian<'_> {
    fn dim(&self) -> usize {
        2 * self.n()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let vx = v.rows(0, n).into_owned();
        let vp = v.rows(n, n);
        let fx = self.fidelity_apply(&vx);
        let mut out = DVector::zeros(2 * n);
        for j in 0..n {
            let c = self.coupling[j];
            out[j] = fx[j] + vx[j] - c * vp[j];
            out[n + j] = -c * vx[j] + (0.5 * c * c + self.curvature[j]) * vp[j];
        }
        out
    }
}
