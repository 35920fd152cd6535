use std::f64::consts::{FRAC_PI_4, PI};

/// Crossover between the power series and the Hankel expansion.
///
/// Below 12 the asymptotic series cannot reach 1e-10 (its smallest term
/// near t = 8 is about 2e-8); above it the power series starts to lose
/// digits to cancellation.
const SERIES_LIMIT: f64 = 12.0;

/// Bessel function of the first kind, order one.
pub fn bessel_j1(t: f64) -> f64 {
    if t < 0.0 {
        return -bessel_j1(-t);
    }
    if t < SERIES_LIMIT {
        series(t)
    } else {
        hankel(t)
    }
}

fn series(t: f64) -> f64 {
    let half = 0.5 * t;
    let q = -half * half;
    let mut term = half;
    let mut sum = term;
    for k in 1..200 {
        term *= q / (k as f64 * (k + 1) as f64);
        sum += term;
        if term.abs() <= f64::EPSILON * sum.abs() * 1e-3 {
            break;
        }
    }
    sum
}

fn hankel(t: f64) -> f64 {
    // a_k = prod_{j=1..k} (4 - (2j-1)^2) / (k! 8^k)
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 0..60 {
        if k > 0 {
            let odd = (2 * k - 1) as f64;
            term *= (4.0 - odd * odd) / (k as f64 * 8.0 * t);
        }
        if term.abs() >= prev {
            break;
        }
        prev = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = t - 3.0 * FRAC_PI_4;
    (2.0 / (PI * t)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// `(J₁(t)/t)²`, continuous at zero with value ¼.
pub fn airy_kernel(t: f64) -> f64 {
    if t.abs() < 1e-8 {
        // J₁(t)/t = ½ − t²/16 + …
        let g = 0.5 - t * t / 16.0;
        return g * g;
    }
    let g = bessel_j1(t) / t;
    g * g
}
