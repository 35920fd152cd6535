mod common;

use common::*;
use hierpath::hessian::{
    assemble_scaled_hessian, build_preconditioner, condition_diagnostics, penalty_inverse_apply, PenaltyFactor,
};
use hierpath::model::{gradient, optimal_theta, theta_lower_bound, HyperParameters, Problem, State};
use hierpath::path::{follow_path, HyperPath, PathOptions, CONVEX_START};
use hierpath::problems::{build_deconvolution, DeconvolutionConfig};
use hierpath::solvers::{map_estimate, LinearOperator, SolverOptions, Strategy};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

fn dense_apply(op: &dyn LinearOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        m.set_column(j, &op.apply(&e));
    }
    m
}

/// A state with a few large entries and the rest near zero, `θ` optimal.
fn compressible_state(rng: &mut rand_chacha::ChaCha20Rng, hyper: &HyperParameters, support: &[usize]) -> State {
    let n = hyper.dim();
    let mut x = DVector::from_fn(n, |_, _| 1e-4 * normal(rng));
    for &j in support {
        x[j] = 3.0 + normal(rng).abs();
    }
    let theta = optimal_theta(&x, hyper).unwrap();
    State::from_theta(x, theta).unwrap()
}

#[test]
fn scaled_hessian_is_symmetric() {
    let mut rng = rng(21);
    for _ in 0..20 {
        let problem = random_problem(&mut rng, 9, 12);
        let hyper = random_hyper(&mut rng, 12);
        let state = random_state(&mut rng, 12);
        let hs = assemble_scaled_hessian(&state, &hyper, &problem).unwrap();
        let (u, v) = (random_vector(&mut rng, 24), random_vector(&mut rng, 24));
        let (a, b) = (hs.apply(&u).dot(&v), u.dot(&hs.apply(&v)));
        assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(1.0));
    }
}

#[test]
fn scaled_hessian_matches_differenced_gradient() {
    let mut rng = rng(22);
    for _ in 0..10 {
        let n = 12;
        let problem = random_problem(&mut rng, 10, n);
        let hyper = random_hyper(&mut rng, n);
        let state = random_state(&mut rng, n);
        let z = state.stacked();
        let mut fd = DMatrix::zeros(2 * n, 2 * n);
        for k in 0..2 * n {
            let h = 1e-5 * z[k].abs().max(1.0);
            let (mut p, mut m) = (z.clone(), z.clone());
            p[k] += h;
            m[k] -= h;
            let gp = gradient(&State::from_stacked(&p).unwrap(), &hyper, &problem).unwrap();
            let gm = gradient(&State::from_stacked(&m).unwrap(), &hyper, &problem).unwrap();
            fd.set_column(k, &((gp - gm) / (2.0 * h)));
        }
        let fd = 0.5 * (&fd + fd.transpose());
        let hs = assemble_scaled_hessian(&state, &hyper, &problem).unwrap();
        let d = DMatrix::from_diagonal(&hs.scaling());
        assert!(rel_mat(&hs.to_dense(), &(&d * &fd * &d)) <= 1e-4);
        assert!(rel_mat(&hs.raw_dense(), &fd) <= 1e-4);
        assert!(rel_mat(&dense_apply(&hs), &hs.to_dense()) <= 1e-14);
    }
}

#[test]
fn scalar_penalty_inverse_example() {
    let hyper = HyperParameters::with_scalar(1.0, 1.0, 1.0, 1).unwrap();
    let state = State::from_theta(DVector::from_element(1, 1.0), DVector::from_element(1, 1.0)).unwrap();
    let hp = PenaltyFactor::from_state(&state, &hyper).unwrap().dense();
    let inv = hp.clone().try_inverse().unwrap();
    let expected = DMatrix::from_row_slice(2, 2, &[3.0, 2.0, 2.0, 2.0]);
    assert!(rel_mat(&inv, &expected) <= 1e-14);
    let y = penalty_inverse_apply(&state, &hyper, &DVector::from_vec(vec![1.0, 0.0])).unwrap();
    assert!((y[0] - 3.0).abs() <= 1e-14 && (y[1] - 2.0).abs() <= 1e-14);
}

#[test]
fn penalty_inverse_round_trips() {
    let mut rng = rng(23);
    for _ in 0..20 {
        let hyper = random_hyper(&mut rng, 10);
        let state = random_state(&mut rng, 10);
        let Ok(pf) = PenaltyFactor::from_state(&state, &hyper) else { continue };
        let v = random_vector(&mut rng, 20);
        let y = penalty_inverse_apply(&state, &hyper, &v).unwrap();
        assert!(rel(&(pf.dense() * y), &v) <= 1e-12);
    }
}

#[test]
fn screening_bound_holds_on_dense_instances() {
    let mut rng = rng(24);
    for _ in 0..20 {
        let n = 20;
        let problem = random_problem(&mut rng, 15, n);
        let hyper = random_hyper(&mut rng, n);
        let state = random_state(&mut rng, n);
        let hs = assemble_scaled_hessian(&state, &hyper, &problem).unwrap();
        let Ok(p) = build_preconditioner(&hs, 0.5) else { continue };
        let u = p.factor_padded().rows(0, n).into_owned();
        let e = hs.fidelity_dense() - &u * u.transpose();
        let e_inf = inf_norm(&e);
        assert!(e_inf <= 0.5 + 1e-12, "‖E‖∞ = {e_inf}");
        assert!((e_inf - p.error_inf()).abs() <= 1e-10 * e_inf.max(1.0));
        let spectral = SymmetricEigen::new(e).eigenvalues.amax();
        assert!(spectral <= e_inf + 1e-12);
        assert!(p.rank() <= p.kept_columns().len() && p.kept_columns().len() <= n);
    }
}

#[test]
fn woodbury_apply_matches_dense_inverse() {
    let mut rng = rng(25);
    for _ in 0..20 {
        let n = 6;
        let problem = random_problem(&mut rng, 8, n);
        let hyper = random_hyper(&mut rng, n);
        let state = random_state(&mut rng, n);
        let hs = assemble_scaled_hessian(&state, &hyper, &problem).unwrap();
        let Ok(p) = build_preconditioner(&hs, 0.5) else { continue };
        let u = p.factor_padded();
        let m = p.penalty().dense() + &u * u.transpose();
        let Some(inv) = m.try_inverse() else { continue };
        let v = random_vector(&mut rng, 2 * n);
        assert!(rel(&p.apply(&v), &(inv * &v)) <= 1e-10);
    }
}

#[test]
fn woodbury_is_exact_without_truncation() {
    let mut rng = rng(26);
    for _ in 0..10 {
        let n = 8;
        let problem = random_problem(&mut rng, 12, n);
        let hyper = random_hyper(&mut rng, n);
        let state = random_state(&mut rng, n);
        let hs = assemble_scaled_hessian(&state, &hyper, &problem).unwrap();
        let Ok(p) = build_preconditioner(&hs, 1e-13) else { continue };
        assert_eq!(p.kept_columns().len(), n);
        let ph = dense_apply(&p) * hs.to_dense();
        assert!(rel_mat(&ph, &DMatrix::identity(2 * n, 2 * n)) <= 1e-10);
    }
}

#[test]
fn screening_removes_everything_at_the_bound() {
    let n = 10;
    let mut rng = rng(27);
    let problem = random_problem(&mut rng, 8, n);
    let hyper = HyperParameters::with_scalar(1.0, 1.0, 1e-6, n).unwrap();
    let state = State::from_theta(DVector::zeros(n), theta_lower_bound(&hyper).unwrap()).unwrap();
    let hs = assemble_scaled_hessian(&state, &hyper, &problem).unwrap();
    let p = build_preconditioner(&hs, 0.5).unwrap();
    assert!(p.kept_columns().is_empty());
    assert_eq!(p.rank(), 0);
    let v = random_vector(&mut rng, 2 * n);
    assert_eq!(p.apply(&v), penalty_inverse_apply(&state, &hyper, &v).unwrap());
}

#[test]
fn preconditioned_rayleigh_quotients_cluster_at_one() {
    let mut rng = rng(28);
    let n = 40;
    let problem = random_problem(&mut rng, 30, n);
    let hyper = HyperParameters::with_scalar(1.5, 1.5, 1e-2, n).unwrap();
    let state = compressible_state(&mut rng, &hyper, &[3, 17, 29]);
    let hs = assemble_scaled_hessian(&state, &hyper, &problem).unwrap();
    let p = build_preconditioner(&hs, 0.5).unwrap();
    assert!(p.kept_columns().len() < n);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let v = random_vector(&mut rng, 2 * n);
        let w = p.apply(&v);
        // Rayleigh quotient of P·H_S in the P⁻¹ inner product.
        let q = w.dot(&hs.apply(&w)) / w.dot(&v);
        worst = worst.max((q - 1.0).abs());
    }
    assert!(worst < 1.0, "quotient spread {worst}");
}

#[test]
fn condition_numbers_of_simple_operators() {
    let one = |a: f64| {
        let problem = Problem::new(DMatrix::from_element(1, 1, a), DVector::zeros(1), None, 1.0).unwrap();
        let hyper = HyperParameters::with_scalar(1.0, 1.0, 1.0, 1).unwrap();
        let state = State::from_theta(DVector::zeros(1), DVector::from_element(1, 1.0)).unwrap();
        let hs = assemble_scaled_hessian(&state, &hyper, &problem).unwrap();
        condition_diagnostics(&hs, None).unwrap()
    };
    let d = one(0.0);
    assert!((d.cond - 1.0).abs() <= 1e-14);
    let d = one(3.0);
    assert!((d.cond - 10.0).abs() <= 1e-12);
}

#[test]
fn kept_columns_and_rank_shrink_along_the_deconvolution_path() {
    let problem = build_deconvolution(&DeconvolutionConfig::default()).unwrap();
    let trace = follow_path(&problem, &HyperPath::deconvolution(60), None, &PathOptions::default()).unwrap();
    assert!(trace.aborted.is_none());
    let first = &trace.rows[0];
    let last = trace.rows.last().unwrap();
    let (k0, k1) = (first.kept_cols.unwrap(), last.kept_cols.unwrap());
    let (r0, r1) = (first.eff_rank.unwrap(), last.eff_rank.unwrap());
    assert!(k1 < k0 && r1 <= r0, "kept {k0} → {k1}, rank {r0} → {r1}");
    let jumps = DeconvolutionConfig::default().jump_locations.len();
    assert!(r1.abs_diff(jumps) <= 2, "final rank {r1}");
}

#[test]
fn converged_deconvolution_preconditioner_is_effective() {
    let problem = build_deconvolution(&DeconvolutionConfig::default()).unwrap();
    let n = problem.dim();
    let w = CONVEX_START;
    let hyper = HyperParameters::with_scalar(w.r, w.eta, w.vartheta, n).unwrap();
    let res = map_estimate(&problem, &hyper, Strategy::IasThenNewton { ias_steps: 3 }, None, &SolverOptions::default())
        .unwrap();
    let hs = assemble_scaled_hessian(&res.state, &hyper, &problem).unwrap();
    let p = build_preconditioner(&hs, 0.5).unwrap();
    let d = condition_diagnostics(&hs, Some(&p)).unwrap();
    assert!(d.cond_pre.unwrap() <= 10.0 && d.cond_pre.unwrap() < d.cond);
}
