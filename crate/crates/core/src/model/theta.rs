use nalgebra::DVector;

use super::HyperParameters;
use crate::error::{Error, Result};

const MAX_ITER: usize = 100;
const REL_TOL: f64 = 1e-14;

/// Positive root `ξ` of `−½u² − ηξ + rξ^{r+1} = 0`, the optimal
/// nondimensional variance for a nondimensional signal value `u`.
///
/// Only the `r > 0` branch is supported. On that branch the residual is
/// convex and increasing for `ξ ≥ (η/r)^{1/r}`, so a Newton iteration started
/// to the right of the root descends monotonically onto it. Any step that
/// leaves the current bracket is replaced by bisection.
pub fn theta_update(u: f64, hyper: &HyperParameters) -> Result<f64> {
    let r = hyper.r();
    let eta = hyper.eta();
    if r <= 0.0 {
        return Err(Error::Unsupported("optimal variance map for r <= 0".into()));
    }
    if !u.is_finite() {
        return Err(Error::NonFinite("theta update input"));
    }
    let lower = (eta / r).powf(1.0 / r);
    let half_u2 = 0.5 * u * u;
    if half_u2 == 0.0 {
        return Ok(lower);
    }
    if r == 1.0 {
        return Ok(0.5 * (eta + (eta * eta + 4.0 * half_u2).sqrt()));
    }

    let residual = |xi: f64| r * xi.powf(r + 1.0) - eta * xi - half_u2;
    let mut hi = (2.0 * (half_u2 + eta) / r).powf(1.0 / (r + 1.0)) + lower;
    let mut grow = 0;
    while residual(hi) < 0.0 {
        hi *= 2.0;
        grow += 1;
        if grow > 2000 {
            return Err(Error::RootNotConverged { u, iterations: grow });
        }
    }
    let mut lo = lower;
    let mut xi = hi;
    for _ in 0..MAX_ITER {
        let f = residual(xi);
        if f == 0.0 {
            return Ok(xi);
        }
        if f > 0.0 {
            hi = xi;
        } else {
            lo = xi;
        }
        let df = r * (r + 1.0) * xi.powf(r) - eta;
        let mut next = xi - f / df;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        if (next - xi).abs() <= REL_TOL * xi || hi - lo <= REL_TOL * hi {
            return Ok(next);
        }
        xi = next;
    }
    Err(Error::RootNotConverged { u, iterations: MAX_ITER })
}

/// `ϑ_j (η/r)^{1/r}`: the optimal variance at `x_j = 0` and a lower bound
/// for the optimal variance elsewhere.
pub fn theta_lower_bound(hyper: &HyperParameters) -> Result<DVector<f64>> {
    let r = hyper.r();
    if r <= 0.0 {
        return Err(Error::Unsupported("variance lower bound for r <= 0".into()));
    }
    let factor = (hyper.eta() / r).powf(1.0 / r);
    Ok(hyper.vartheta().map(|v| v * factor))
}

/// Componentwise optimal `θ` given `x`.
pub fn optimal_theta(x: &DVector<f64>, hyper: &HyperParameters) -> Result<DVector<f64>> {
    if x.len() != hyper.dim() {
        return Err(Error::DimensionMismatch { what: "x", expected: hyper.dim(), got: x.len() });
    }
    let mut theta = DVector::zeros(x.len());
    for (j, (&xj, &vt)) in x.iter().zip(hyper.vartheta().iter()).enumerate() {
        theta[j] = vt * theta_update(xj / vt.sqrt(), hyper)?;
    }
    Ok(theta)
}
