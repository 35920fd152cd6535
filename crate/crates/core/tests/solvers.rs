mod common;

use common::*;
use hierpath::model::{objective, theta_lower_bound, HyperParameters, Problem, State};
use hierpath::path::{follow_path, HyperPath, PathOptions, CONVEX_START};
use hierpath::problems::{build_deconvolution, DeconvolutionConfig};
use hierpath::solvers::{
    ias_step, krylov_solve, map_estimate, IasMode, KrylovMethod, KrylovOptions, SolverOptions, StepKind, Strategy,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

fn convex_hyper(n: usize) -> HyperParameters {
    HyperParameters::with_scalar(CONVEX_START.r, CONVEX_START.eta, CONVEX_START.vartheta, n).unwrap()
}

#[test]
fn krylov_matches_direct_solve_on_spd_systems() {
    let mut rng = rng(31);
    for method in [KrylovMethod::Cg, KrylovMethod::Cgls] {
        for _ in 0..10 {
            let b = DMatrix::from_fn(20, 20, |_, _| normal(&mut rng));
            let a = &b * b.transpose() + DMatrix::identity(20, 20);
            let rhs = random_vector(&mut rng, 20);
            let direct = a.clone().cholesky().unwrap().solve(&rhs);
            let opts = KrylovOptions { method, tol: 1e-12, max_iter: 2000 };
            let (y, report) = krylov_solve(&a, &rhs, None, None, &opts).unwrap();
            assert!(report.converged);
            assert!(rel(&y, &direct) <= 1e-8, "{method:?}: {}", rel(&y, &direct));
        }
    }
}

#[test]
fn cgls_handles_symmetric_indefinite_systems() {
    let mut rng = rng(32);
    let q = DMatrix::from_fn(12, 12, |_, _| normal(&mut rng)).qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(12, |i, _| if i % 2 == 0 { 1.0 + i as f64 } else { -2.0 }));
    let a = &q * d * q.transpose();
    let truth = random_vector(&mut rng, 12);
    let rhs = &a * &truth;
    let opts = KrylovOptions { method: KrylovMethod::Cgls, tol: 1e-12, max_iter: 500 };
    let (y, _) = krylov_solve(&a, &rhs, None, None, &opts).unwrap();
    assert!(rel(&y, &truth) <= 1e-8);
}

#[test]
fn exact_ias_decreases_energy_on_deconvolution() {
    let problem = build_deconvolution(&DeconvolutionConfig::default()).unwrap();
    let hyper = convex_hyper(problem.dim());
    let opts = SolverOptions::default();
    let mut state = hierpath::solvers::initial_state(&hyper).unwrap();
    let mut g = objective(&state, &hyper, &problem).unwrap();
    for _ in 0..10 {
        let (next, _) = ias_step(&state, &hyper, &problem, IasMode::Exact, &opts).unwrap();
        let gn = objective(&next, &hyper, &problem).unwrap();
        assert!(gn < g, "{gn} ≥ {g}");
        (state, g) = (next, gn);
    }
}

#[test]
fn newton_tail_converges_quadratically() {
    let problem = build_deconvolution(&DeconvolutionConfig::default()).unwrap();
    let hyper = convex_hyper(problem.dim());
    let res = map_estimate(&problem, &hyper, Strategy::IasThenNewton { ias_steps: 3 }, None, &SolverOptions::default())
        .unwrap();
    assert!(res.converged);
    let newton: Vec<f64> = res.history.iter().filter(|h| h.kind == StepKind::Newton).map(|h| h.grad_norm).collect();
    let pairs: Vec<(f64, f64)> =
        newton.windows(2).map(|w| (w[0], w[1])).filter(|(g, _)| (1e-6..=10.0).contains(g)).collect();
    assert!(pairs.len() >= 2);
    for (g0, g1) in pairs {
        assert!(g1 <= 10.0 * g0 * g0, "{g0:e} → {g1:e}");
    }
}

#[test]
fn zero_data_converges_immediately() {
    let mut rng = rng(33);
    let mut problem = random_problem(&mut rng, 8, 10);
    problem = Problem::new(problem.operator().clone(), DVector::zeros(8), None, 1.0).unwrap();
    let hyper = convex_hyper(10);
    let start = State::from_theta(DVector::zeros(10), DVector::from_element(10, 1.0)).unwrap();
    let res = map_estimate(&problem, &hyper, Strategy::Ias, Some(&start), &SolverOptions::default()).unwrap();
    assert!(res.converged);
    assert!(res.iterations() <= 2, "{} iterations", res.iterations());
    assert!(res.state.x().amax() == 0.0);
    let bound = theta_lower_bound(&hyper).unwrap();
    assert!(rel(res.state.theta(), &bound) <= 1e-12);
}

#[test]
fn convex_minimizer_is_unique() {
    let mut rng = rng(34);
    let problem = random_problem(&mut rng, 20, 30);
    let hyper = convex_hyper(30);
    let opts = SolverOptions { newton_tol: 1e-11, ..SolverOptions::default() };
    let mut first: Option<DVector<f64>> = None;
    for _ in 0..10 {
        let start = random_state(&mut rng, 30);
        let res =
            map_estimate(&problem, &hyper, Strategy::IasThenNewton { ias_steps: 3 }, Some(&start), &opts).unwrap();
        assert!(res.converged);
        let z = res.state.stacked();
        match &first {
            None => first = Some(z),
            Some(z0) => assert!((&z - z0).amax() <= 1e-6),
        }
    }
}

#[test]
fn variances_stay_above_the_bound() {
    let mut rng = rng(35);
    for _ in 0..10 {
        let problem = random_problem(&mut rng, 12, 15);
        let hyper = random_hyper(&mut rng, 15);
        let bound = theta_lower_bound(&hyper).unwrap();
        let strategy = if rng.random_bool(0.5) { Strategy::Ias } else { Strategy::IasThenNewton { ias_steps: 3 } };
        let opts = SolverOptions { max_iterations: 50, ..SolverOptions::default() };
        let res = map_estimate(&problem, &hyper, strategy, None, &opts).unwrap();
        for (t, b) in res.state.theta().iter().zip(bound.iter()) {
            assert!(*t >= b - 1e-12 * b.max(1.0), "{t} below {b}");
        }
    }
}

#[test]
fn warm_starts_save_krylov_iterations() {
    let problem = build_deconvolution(&DeconvolutionConfig::default()).unwrap();
    let path = HyperPath::deconvolution(60);
    let warm = follow_path(&problem, &path, None, &PathOptions::default()).unwrap();
    let cold =
        follow_path(&problem, &path, None, &PathOptions { warm_start: false, ..PathOptions::default() }).unwrap();
    assert!(warm.aborted.is_none() && cold.aborted.is_none());
    assert!(warm.total_krylov() <= cold.total_krylov(), "{} > {}", warm.total_krylov(), cold.total_krylov());
}

#[test]
fn newton_error_contracts_quadratically_near_the_minimizer() {
    let problem = build_deconvolution(&DeconvolutionConfig::default()).unwrap();
    let hyper = convex_hyper(problem.dim());
    let gold = SolverOptions { newton_tol: 1e-10, ..SolverOptions::default() };
    let star = map_estimate(&problem, &hyper, Strategy::IasThenNewton { ias_steps: 3 }, None, &gold).unwrap();
    assert!(star.converged);
    let z_star = star.state.stacked();
    // Perturb the minimizer on the scale of each variance, then take 3
    // Newton steps.
    let mut rng = rng(36);
    let n = problem.dim();
    let mut z = z_star.clone();
    for j in 0..n {
        z[j] += 1e-3 * star.state.theta()[j].sqrt() * normal(&mut rng);
        z[n + j] += 1e-3 * normal(&mut rng);
    }
    let opts = SolverOptions::default();
    let mut errs = vec![(&z - &z_star).norm()];
    for _ in 0..3 {
        let state = State::from_stacked(&z).unwrap();
        let out = hierpath::solvers::newton_step(&state, &hyper, &problem, None, None, &opts).unwrap();
        z = out.state.stacked();
        errs.push((&z - &z_star).norm());
    }
    for w in errs.windows(2) {
        if w[0] > 1e-7 {
            assert!(w[1] / (w[0] * w[0]) <= 1e3, "{errs:?}");
        }
    }
    assert!(errs[3] <= 1e-3 * errs[0], "{errs:?}");
}
