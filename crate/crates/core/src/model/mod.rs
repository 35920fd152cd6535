//! The hierarchical MAP objective and its building blocks.
//!
//! The state is stored in `(x, φ = log θ)` coordinates. Gradients and
//! Hessians are taken with respect to those coordinates, which keeps the
//! variances positive along any update.

mod gram;
mod theta;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

pub use gram::Gram;
pub use theta::{optimal_theta, theta_lower_bound, theta_update};

/// `η = rβ − 3/2`.
pub fn eta_from_beta(r: f64, beta: f64) -> Result<f64> {
    if r == 0.0 || !r.is_finite() {
        return Err(Error::InvalidHyper(format!("r must be finite and nonzero, got {r}")));
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::InvalidHyper(format!("beta must be positive, got {beta}")));
    }
    Ok(r * beta - 1.5)
}

/// Shape exponent `r`, shape `η` and per-component scale `ϑ`.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperParameters {
    r: f64,
    eta: f64,
    vartheta: DVector<f64>,
}

impl HyperParameters {
    pub fn new(r: f64, eta: f64, vartheta: DVector<f64>) -> Result<Self> {
        if !r.is_finite() || !eta.is_finite() {
            return Err(Error::InvalidHyper(format!("non-finite r = {r} or eta = {eta}")));
        }
        let valid = (r > 0.0 && eta > 0.0) || (r < 0.0 && eta < -1.5);
        if !valid {
            return Err(Error::InvalidHyper(format!(
                "(r, eta) = ({r}, {eta}) is outside the valid region (r > 0, eta > 0) or (r < 0, eta < -3/2)"
            )));
        }
        if vartheta.is_empty() {
            return Err(Error::InvalidHyper("vartheta is empty".into()));
        }
        if let Some(v) = vartheta.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidHyper(format!("vartheta entries must be positive, got {v}")));
        }
        Ok(Self { r, eta, vartheta })
    }

    /// Broadcasts a scalar scale to `n` components.
    pub fn with_scalar(r: f64, eta: f64, vartheta: f64, n: usize) -> Result<Self> {
        Self::new(r, eta, DVector::from_element(n, vartheta))
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// `β = (η + 3/2) / r`, always positive in the valid region.
    pub fn beta(&self) -> f64 {
        (self.eta + 1.5) / self.r
    }

    pub fn vartheta(&self) -> &DVector<f64> {
        &self.vartheta
    }

    pub fn dim(&self) -> usize {
        self.vartheta.len()
    }
}

/// Paired signal and variance vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    x: DVector<f64>,
    phi: DVector<f64>,
    theta: DVector<f64>,
}

impl State {
    pub fn from_theta(x: DVector<f64>, theta: DVector<f64>) -> Result<Self> {
        if x.len() != theta.len() {
            return Err(Error::DimensionMismatch { what: "theta", expected: x.len(), got: theta.len() });
        }
        if let Some(t) = theta.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
            return Err(Error::InvalidArgument(format!("theta entries must be positive and finite, got {t}")));
        }
        let phi = theta.map(f64::ln);
        Ok(Self { x, phi, theta })
    }

    pub fn from_log(x: DVector<f64>, phi: DVector<f64>) -> Result<Self> {
        if x.len() != phi.len() {
            return Err(Error::DimensionMismatch { what: "phi", expected: x.len(), got: phi.len() });
        }
        let theta = phi.map(f64::exp);
        if theta.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::NonFinite("theta = exp(phi)"));
        }
        Ok(Self { x, phi, theta })
    }

    /// Stacked `[x; φ]` vector.
    pub fn from_stacked(z: &DVector<f64>) -> Result<Self> {
        if !z.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument("stacked state has odd length".into()));
        }
        let n = z.len() / 2;
        Self::from_log(z.rows(0, n).into_owned(), z.rows(n, n).into_owned())
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn x(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn phi(&self) -> &DVector<f64> {
        &self.phi
    }

    pub fn stacked(&self) -> DVector<f64> {
        let n = self.dim();
        let mut z = DVector::zeros(2 * n);
        z.rows_mut(0, n).copy_from(&self.x);
        z.rows_mut(n, n).copy_from(&self.phi);
        z
    }

    /// `z + alpha * dz` in `(x, φ)` coordinates.
    pub fn step(&self, dz: &DVector<f64>, alpha: f64) -> Result<Self> {
        let n = self.dim();
        if dz.len() != 2 * n {
            return Err(Error::DimensionMismatch { what: "step direction", expected: 2 * n, got: dz.len() });
        }
        let x = &self.x + dz.rows(0, n) * alpha;
        let phi = &self.phi + dz.rows(n, n) * alpha;
        Self::from_log(x, phi)
    }

    /// Nondimensional coordinates `u = x ϑ^{-1/2}`, `ξ = θ / ϑ`.
    pub fn nondimensional(&self, hyper: &HyperParameters) -> (DVector<f64>, DVector<f64>) {
        let vt = hyper.vartheta();
        let u = self.x.zip_map(vt, |x, v| x / v.sqrt());
        let xi = self.theta.zip_map(vt, |t, v| t / v);
        (u, xi)
    }

    pub fn from_nondimensional(u: &DVector<f64>, xi: &DVector<f64>, hyper: &HyperParameters) -> Result<Self> {
        let vt = hyper.vartheta();
        let x = u.zip_map(vt, |u, v| u * v.sqrt());
        let theta = xi.zip_map(vt, |xi, v| xi * v);
        Self::from_theta(x, theta)
    }
}

/// A linear inverse problem `b = A x + ε`.
///
/// Operators with at most [`SPARSE_DENSITY`] nonzeros are also kept in
/// compressed form, which then backs every product and the Gram matrix.
#[derive(Debug, Clone)]
pub struct Problem {
    operator: DMatrix<f64>,
    sparse: Option<Compressed>,
    data: DVector<f64>,
    truth: Option<DVector<f64>>,
    noise_sigma: f64,
    gram: OnceLock<Gram>,
}

/// Fraction of nonzero entries below which the operator is compressed.
pub const SPARSE_DENSITY: f64 = 0.1;

#[derive(Debug, Clone)]
struct Compressed {
    a: CsrMatrix<f64>,
    at: CsrMatrix<f64>,
}

impl Problem {
    pub fn new(
        operator: DMatrix<f64>,
        data: DVector<f64>,
        truth: Option<DVector<f64>>,
        noise_sigma: f64,
    ) -> Result<Self> {
        if operator.nrows() != data.len() {
            return Err(Error::DimensionMismatch { what: "data", expected: operator.nrows(), got: data.len() });
        }
        if let Some(t) = &truth {
            if t.len() != operator.ncols() {
                return Err(Error::DimensionMismatch { what: "truth", expected: operator.ncols(), got: t.len() });
            }
        }
        let nnz = operator.iter().filter(|v| **v != 0.0).count();
        let sparse = (nnz as f64 <= SPARSE_DENSITY * operator.len() as f64).then(|| {
            let a = CsrMatrix::from(&CooMatrix::from(&operator));
            let at = a.transpose();
            Compressed { a, at }
        });
        Ok(Self { operator, sparse, data, truth, noise_sigma, gram: OnceLock::new() })
    }

    pub fn operator(&self) -> &DMatrix<f64> {
        &self.operator
    }

    pub fn data(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn truth(&self) -> Option<&DVector<f64>> {
        self.truth.as_ref()
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    /// Number of observations `m`.
    pub fn rows(&self) -> usize {
        self.operator.nrows()
    }

    /// Number of unknowns `n`.
    pub fn dim(&self) -> usize {
        self.operator.ncols()
    }

    /// True when products use the compressed operator.
    pub fn is_sparse(&self) -> bool {
        self.sparse.is_some()
    }

    /// `AᵀA`, computed on first use and cached.
    pub fn gram(&self) -> &Gram {
        self.gram.get_or_init(|| match &self.sparse {
            Some(c) => Gram::Sparse(&c.at * &c.a),
            None => Gram::Dense(self.operator.transpose() * &self.operator),
        })
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.sparse {
            Some(c) => csr_apply(&c.a, x),
            None => &self.operator * x,
        }
    }

    pub fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.sparse {
            Some(c) => csr_apply(&c.at, y),
            None => self.operator.tr_mul(y),
        }
    }

    /// `Ax − b` with compensated dot products.
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        let m = self.rows();
        match &self.sparse {
            Some(c) => DVector::from_iterator(
                m,
                c.a.row_iter().zip(self.data.iter()).map(|(row, &b)| {
                    compensated_dot(-b, row.col_indices().iter().zip(row.values()).map(|(&j, &a)| (a, x[j])))
                }),
            ),
            None => DVector::from_fn(m, |i, _| {
                compensated_dot(-self.data[i], (0..self.dim()).map(|j| (self.operator[(i, j)], x[j])))
            }),
        }
    }

    /// `Aᵀy + offset` with compensated dot products.
    pub fn transpose_apply_plus(&self, y: &DVector<f64>, offset: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        match &self.sparse {
            Some(c) => DVector::from_iterator(
                n,
                c.at.row_iter().zip(offset.iter()).map(|(row, &o)| {
                    compensated_dot(o, row.col_indices().iter().zip(row.values()).map(|(&i, &a)| (a, y[i])))
                }),
            ),
            None => DVector::from_fn(n, |j, _| {
                compensated_dot(offset[j], self.operator.column(j).iter().copied().zip(y.iter().copied()))
            }),
        }
    }

    /// `Aᵀ(A v)`.
    pub fn normal_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self.apply_transpose(&self.apply(v))
    }

    fn check(&self, state: &State, hyper: &HyperParameters) -> Result<()> {
        let n = self.dim();
        if state.dim() != n {
            return Err(Error::DimensionMismatch { what: "state", expected: n, got: state.dim() });
        }
        if hyper.dim() != n {
            return Err(Error::DimensionMismatch { what: "vartheta", expected: n, got: hyper.dim() });
        }
        Ok(())
    }
}

/// `start + Σ aᵢbᵢ` accumulated in twice the working precision
/// (error-free products via FMA, error-free sums via TwoSum).
fn compensated_dot(start: f64, terms: impl Iterator<Item = (f64, f64)>) -> f64 {
    let (mut sum, mut carry) = (start, 0.0);
    for (a, b) in terms {
        let p = a * b;
        let p_err = a.mul_add(b, -p);
        let t = sum + p;
        let z = t - sum;
        carry += (sum - (t - z)) + (p - z) + p_err;
        sum = t;
    }
    sum + carry
}

fn csr_apply(m: &CsrMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(
        m.nrows(),
        m.row_iter().map(|row| row.col_indices().iter().zip(row.values()).map(|(&j, a)| a * v[j]).sum()),
    )
}

/// `(θ_j / ϑ_j)^r`, evaluated through the log variance.
pub(crate) fn scaled_power(phi: f64, vartheta: f64, r: f64) -> f64 {
    (r * (phi - vartheta.ln())).exp()
}

/// Gibbs energy `½‖b−Ax‖² + ½Σx²/θ − ηΣlog(θ/ϑ) + Σ(θ/ϑ)^r`.
pub fn objective(state: &State, hyper: &HyperParameters, problem: &Problem) -> Result<f64> {
    problem.check(state, hyper)?;
    let resid = problem.residual(state.x());
    let fidelity = 0.5 * resid.norm_squared();
    let (r, eta) = (hyper.r(), hyper.eta());
    let mut penalty = 0.0;
    for j in 0..state.dim() {
        let x = state.x[j];
        let phi = state.phi[j];
        let vt = hyper.vartheta[j];
        penalty += 0.5 * x * x / state.theta[j] - eta * (phi - vt.ln()) + scaled_power(phi, vt, r);
    }
    let g = fidelity + penalty;
    if !g.is_finite() {
        return Err(Error::NonFinite("objective"));
    }
    Ok(g)
}

/// Gradient `[∇_x G; ∇_φ G]` in `(x, φ)` coordinates.
pub fn gradient(state: &State, hyper: &HyperParameters, problem: &Problem) -> Result<DVector<f64>> {
    problem.check(state, hyper)?;
    let n = state.dim();
    let resid = problem.residual(state.x());
    let gx = problem.transpose_apply_plus(&resid, &state.x.component_div(&state.theta));
    let (r, eta) = (hyper.r(), hyper.eta());
    let mut g = DVector::zeros(2 * n);
    for j in 0..n {
        let x = state.x[j];
        let theta = state.theta[j];
        g[j] = gx[j];
        g[n + j] = -0.5 * x * x / theta - eta + r * scaled_power(state.phi[j], hyper.vartheta[j], r);
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    Ok(g)
}
