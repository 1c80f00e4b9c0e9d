//! Solver-level behavior: equivalence of the two FISTA forms, agreement
//! with normal equations on smooth problems, termination bookkeeping, and
//! divergence handling.

mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use proxcert::experiments::build_random_lasso;
use proxcert::problem::{dense_gram_spectrum, make_lasso, LinearOperator};
use rand::Rng;
use proxcert::solvers::{
    fista_momentum, fista_phase_space, ista, momentum_coefficient, reference_solution,
    solve_to_tolerance, Method, StartPoint, StoppingRule, Termination,
};

#[test]
fn momentum_and_phase_space_forms_agree() {
    for (i, &(d, ratio)) in [(4usize, 0.1), (9, 1.0), (15, 0.01), (24, 0.1)].iter().enumerate() {
        let l = 4.0;
        let instance = dense_instance(300 + i as u64, d + 6, d, ratio * l, l, 0.1);
        let s = 0.5 / l;
        let x0 = DVector::zeros(d);
        let stop = StoppingRule::new(300, 0.0).unwrap();
        let a = fista_momentum(&instance.problem, &x0, s, &stop).unwrap();
        let b = fista_phase_space(&instance.problem, &x0, s, &stop).unwrap();
        // With grad_tol = 0 a run ends early only by landing on the exact
        // minimizer, and the two forms may do so an iteration or two apart.
        let n = a.records.len().min(b.records.len());
        assert!(n >= 20, "instance {i} converged implausibly fast");
        if a.records.len() != b.records.len() {
            let short = if a.records.len() < b.records.len() { &a } else { &b };
            let long = if a.records.len() < b.records.len() { &b } else { &a };
            assert_eq!(short.terminated_by, Termination::Tolerance);
            assert_eq!(short.records.last().unwrap().gs_norm_sq, 0.0);
            let settled = short.records.last().unwrap().x.as_ref().unwrap();
            for r in &long.records[n..] {
                assert!(vectors_close(r.x.as_ref().unwrap(), settled, 1e-9));
            }
        }
        for (ra, rb) in a.records[..n].iter().zip(&b.records[..n]) {
            assert!(
                vectors_close(ra.x.as_ref().unwrap(), rb.x.as_ref().unwrap(), 1e-9),
                "x diverged at k={} on instance {i}",
                ra.k
            );
            assert!(
                vectors_close(&ra.y, &rb.y, 1e-9),
                "y diverged at k={} on instance {i}",
                ra.k
            );
        }
    }
}

#[test]
fn phase_space_velocity_matches_iterate_differences() {
    let instance = dense_instance(311, 14, 8, 0.4, 4.0, 0.05);
    let s = 0.125;
    let stop = StoppingRule::new(150, 0.0).unwrap();
    let trace = fista_phase_space(&instance.problem, &DVector::zeros(8), s, &stop).unwrap();
    let root_s = s.sqrt();
    assert_eq!(trace.records[0].v.as_ref().unwrap().norm(), 0.0);
    for w in trace.records.windows(2) {
        let x_prev = w[0].x.as_ref().unwrap();
        let x_next = w[1].x.as_ref().unwrap();
        let v_next = w[1].v.as_ref().unwrap();
        let diff = (x_next - x_prev) / root_s;
        assert!(
            (v_next - &diff).norm() <= 1e-12 * (1.0 + v_next.norm()),
            "velocity identity broken at k={}",
            w[1].k
        );
    }
}

#[test]
fn smooth_problem_reference_matches_normal_equations() {
    let instance = dense_instance(321, 15, 10, 0.5, 4.0, 0.0);
    let a = instance.file.operator().unwrap().to_dense(32).unwrap();
    let b = DVector::from_vec(instance.file.b.clone());
    let x_ls = (a.transpose() * &a)
        .cholesky()
        .expect("gram matrix is positive definite")
        .solve(&(a.transpose() * &b));
    let reference = reference_solution(&instance.problem, 1e-12).unwrap();
    assert!(reference.converged);
    assert!(
        (reference.x - &x_ls).norm() <= 1e-8 * (1.0 + x_ls.norm()),
        "reference disagrees with the normal equations"
    );
}

#[test]
fn termination_reasons_and_record_shape() {
    let instance = dense_instance(333, 10, 6, 0.4, 4.0, 0.1);
    let x0 = DVector::zeros(6);

    let stop = StoppingRule::new(500, 1e6).unwrap();
    let t = ista(&instance.problem, &x0, 0.125, &stop).unwrap();
    assert_eq!(t.terminated_by, Termination::Tolerance);
    assert_eq!(t.records.len(), 1);

    let stop = StoppingRule::new(50, 0.0).unwrap();
    let t = ista(&instance.problem, &x0, 0.125, &stop).unwrap();
    assert_eq!(t.terminated_by, Termination::MaxIters);
    assert_eq!(t.records.len(), 51);
    assert!(t.records.iter().enumerate().all(|(i, r)| r.k == i));
    assert!(t.records.iter().all(|r| r.step == 0.125));
    assert_eq!(t.meta.x0, StartPoint::Zeros);
    assert_eq!(t.meta.dimension, 6);
    assert_eq!(t.meta.lambda, Some(0.1));
    assert!(!t.divergent && !t.step_warning && !t.mu_zero_momentum);
    assert_eq!(t.iterations(), 50);

    let x0_other = DVector::from_element(6, 0.5);
    let t = ista(&instance.problem, &x0_other, 0.125, &stop).unwrap();
    assert_eq!(t.meta.x0, StartPoint::Other);
}

#[test]
fn tolerance_stop_records_the_crossing_iterate() {
    let instance = dense_instance(345, 12, 7, 0.4, 4.0, 0.05);
    let x0 = DVector::zeros(7);
    let stop = StoppingRule::new(5000, 1e-8).unwrap();
    let t = fista_momentum(&instance.problem, &x0, 0.125, &stop).unwrap();
    assert_eq!(t.terminated_by, Termination::Tolerance);
    let last = t.final_record();
    assert!(last.gs_norm_sq <= 1e-8);
    assert!(t.records[..t.records.len() - 1]
        .iter()
        .all(|r| r.gs_norm_sq > 1e-8));
}

#[test]
fn step_warning_and_divergence_flags() {
    let l = 4.0;
    let instance = dense_instance(356, 12, 6, 0.4, l, 0.0);
    let x0 = DVector::zeros(6);

    let stop = StoppingRule::new(100, 0.0).unwrap();
    let t = ista(&instance.problem, &x0, 1.2 / l, &stop).unwrap();
    assert!(t.step_warning);
    assert!(!t.divergent, "s = 1.2/L still contracts a quadratic");

    let stop = StoppingRule::new(2000, 0.0).unwrap();
    let t = ista(&instance.problem, &x0, 10.0 / l, &stop).unwrap();
    assert!(t.step_warning && t.divergent);
    assert!(t.records.len() < 2001, "divergent run must stop early");
    assert!(t.records.iter().all(|r| r.gs_norm_sq.is_finite()));
}

#[test]
fn non_recording_run_reports_the_same_crossing() {
    let instance = dense_instance(367, 12, 7, 0.4, 4.0, 0.05);
    let x0 = DVector::zeros(7);
    let stop = StoppingRule::new(2000, 0.0).unwrap();
    let trace = fista_momentum(&instance.problem, &x0, 0.125, &stop).unwrap();
    let expected = trace
        .records
        .iter()
        .find(|r| r.gs_norm_sq <= 1e-8)
        .map(|r| r.k);
    assert!(expected.is_some(), "tolerance must be reachable in 2000 iters");
    let run = solve_to_tolerance(
        &instance.problem,
        Method::FistaMomentum,
        &x0,
        0.125,
        1e-8,
        2000,
    )
    .unwrap();
    assert_eq!(run.crossed_at, expected);
    assert!(!run.divergent);
}

#[test]
fn zero_mu_sets_the_momentum_flag() {
    let mut rng = seeded_rng(61);
    let a = DMatrix::from_fn(8, 5, |_, _| rng.gen_range(-1.0..=1.0_f64));
    let op = LinearOperator::dense(a).unwrap();
    let (_, l) = dense_gram_spectrum(&op).unwrap();
    let b = DVector::from_element(8, 1.0);
    let problem = make_lasso(op, b, 0.1, 0.0, l).unwrap();
    let stop = StoppingRule::new(20, 0.0).unwrap();
    let t = fista_momentum(&problem, &DVector::zeros(5), 0.5 / l, &stop).unwrap();
    assert!(t.mu_zero_momentum);
    assert_eq!(momentum_coefficient(0.0, 0.5 / l), 1.0);
}

#[test]
fn builder_rejects_degenerate_shapes() {
    assert!(build_random_lasso(3, 5, 0.1, 1.0, 1, 0.1).is_err());
    assert!(build_random_lasso(5, 0, 0.1, 1.0, 1, 0.1).is_err());
    assert!(build_random_lasso(5, 3, 0.0, 1.0, 1, 0.1).is_err());
    assert!(build_random_lasso(5, 3, 2.0, 1.0, 1, 0.1).is_err());
    assert!(build_random_lasso(5, 1, 0.5, 1.0, 1, 0.1).is_err());
    assert!(build_random_lasso(5, 1, 1.0, 1.0, 1, 0.1).is_ok());
}
