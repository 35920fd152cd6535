#![allow(dead_code)]

use hierpath::model::{HyperParameters, Problem, State};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha20Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_problem(rng: &mut ChaCha20Rng, m: usize, n: usize) -> Problem {
    let a = DMatrix::from_fn(m, n, |_, _| normal(rng) / (m as f64).sqrt());
    let b = DVector::from_fn(m, |_, _| normal(rng));
    Problem::new(a, b, None, 1.0).unwrap()
}

pub fn random_hyper(rng: &mut ChaCha20Rng, n: usize) -> HyperParameters {
    let r = rng.random_range(0.4..2.0);
    let eta = rng.random_range(0.01..2.0);
    let vt = DVector::from_fn(n, |_, _| rng.random_range(-1.0f64..1.0).exp());
    HyperParameters::new(r, eta, vt).unwrap()
}

pub fn random_state(rng: &mut ChaCha20Rng, n: usize) -> State {
    let x = DVector::from_fn(n, |_, _| normal(rng));
    let phi = DVector::from_fn(n, |_, _| rng.random_range(-2.0..1.0));
    State::from_log(x, phi).unwrap()
}

pub fn random_vector(rng: &mut ChaCha20Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

/// Central differences of `f` at `z` with step `h·max(1, |z_i|)`.
pub fn fd_gradient(f: impl Fn(&DVector<f64>) -> f64, z: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(z.len(), |i, _| {
        let step = h * z[i].abs().max(1.0);
        let (mut p, mut m) = (z.clone(), z.clone());
        p[i] += step;
        m[i] -= step;
        (f(&p) - f(&m)) / (2.0 * step)
    })
}

pub fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn rel_mat(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}
