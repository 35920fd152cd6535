use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{scaled_power, HyperParameters, State};

const SINGULAR_REL: f64 = 1e-14;

/// Factorization `H_P = RᵀSR` of the penalty block.
///
/// `R = [I, −c; 0, I]` and `S = diag(I, κ − ½c²)`. Every product with `H_P` or
/// its inverse costs `O(n)`.
#[derive(Debug, Clone)]
pub struct PenaltyFactor {
    coupling: DVector<f64>,
    curvature: DVector<f64>,
    s22: DVector<f64>,
}

impl PenaltyFactor {
    pub fn new(coupling: DVector<f64>, curvature: DVector<f64>) -> Result<Self> {
        if coupling.len() != curvature.len() {
            return Err(Error::DimensionMismatch {
                what: "penalty curvature",
                expected: coupling.len(),
                got: curvature.len(),
            });
        }
        let mut s22 = DVector::zeros(coupling.len());
        for j in 0..coupling.len() {
            let half_c2 = 0.5 * coupling[j] * coupling[j];
            let s = curvature[j] - half_c2;
            if !(s.abs() > SINGULAR_REL * curvature[j].max(half_c2)) {
                return Err(Error::SingularPenalty { index: j, value: s });
            }
            s22[j] = s;
        }
        Ok(Self { coupling, curvature, s22 })
    }

    pub fn from_state(state: &State, hyper: &HyperParameters) -> Result<Self> {
        let r = hyper.r();
        let coupling = state.x().zip_map(state.theta(), |x, t| x / t.sqrt());
        let curvature = DVector::from_iterator(
            state.dim(),
            (0..state.dim()).map(|j| r * r * scaled_power(state.phi()[j], hyper.vartheta()[j], r)),
        );
        Self::new(coupling, curvature)
    }

    pub fn n(&self) -> usize {
        self.coupling.len()
    }

    /// Diagonal of the lower block of `S`.
    pub fn s22(&self) -> &DVector<f64> {
        &self.s22
    }

    /// `H_P v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(2 * n);
        for j in 0..n {
            let c = self.coupling[j];
            out[j] = v[j] - c * v[n + j];
            out[n + j] = -c * v[j] + (0.5 * c * c + self.curvature[j]) * v[n + j];
        }
        out
    }

    /// `H_P^{-1} v = R^{-1} S^{-1} R^{-T} v`.
    pub fn apply_inverse(&self, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut out = DVector::zeros(2 * n);
        for j in 0..n {
            let c = self.coupling[j];
            let lower = (c * v[j] + v[n + j]) / self.s22[j];
            out[j] = v[j] + c * lower;
            out[n + j] = lower;
        }
        out
    }

    /// Applies `H_P^{-1}` to every column of `m`.
    pub fn apply_inverse_columns(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for (k, col) in m.column_iter().enumerate() {
            out.set_column(k, &self.apply_inverse(&col.into_owned()));
        }
        out
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut h = DMatrix::identity(2 * n, 2 * n);
        for j in 0..n {
            let c = self.coupling[j];
            h[(j, n + j)] = -c;
            h[(n + j, j)] = -c;
            h[(n + j, n + j)] = 0.5 * c * c + self.curvature[j];
        }
        h
    }

    pub fn dense_r(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut r = DMatrix::identity(2 * n, 2 * n);
        for j in 0..n {
            r[(j, n + j)] = -self.coupling[j];
        }
        r
    }

    pub fn dense_s(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut s = DMatrix::identity(2 * n, 2 * n);
        for j in 0..n {
            s[(n + j, n + j)] = self.s22[j];
        }
        s
    }
}

/// `H_P^{-1} v` at the given point.
pub fn penalty_inverse_apply(state: &State, hyper: &HyperParameters, v: &DVector<f64>) -> Result<DVector<f64>> {
    if v.len() != 2 * state.dim() {
        return Err(Error::DimensionMismatch { what: "penalty rhs", expected: 2 * state.dim(), got: v.len() });
    }
    Ok(PenaltyFactor::from_state(state, hyper)?.apply_inverse(v))
}
