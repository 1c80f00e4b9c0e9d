//! Certification-layer checks: sampled inequalities, envelope construction
//! edge cases, Lyapunov series identities, and honest reporting of
//! violations and uncertifiable traces.

mod common;

use common::*;
use nalgebra::DVector;
use proxcert::certify::{
    build_envelopes, certify_solver_trace, certify_trace, fista_envelopes, fista_lyapunov,
    ista_envelopes, pivotal_sample, pivotal_sample_convex, strong_gap_sample, sweep_pivotal,
    sweep_strong_gap, EnvelopeForm, EnvelopeSet, RateEnvelope, SAMPLED_SLACK_TOL,
};
use proxcert::solvers::{
    fista_momentum, fista_phase_space, ista, reference_solution, StoppingRule,
};
use proxcert::Error;

#[test]
fn sampled_inequalities_hold_on_random_instances() {
    let mut rng = seeded_rng(90);
    for (i, instance) in ratio_suite().into_iter().take(6).enumerate() {
        let problem = &instance.problem;
        let d = problem.dimension;
        let reference = reference_solution(problem, 1e-11).unwrap();
        assert!(reference.converged, "reference failed on instance {i}");
        let s = 0.5 / problem.lipschitz();
        for _ in 0..50 {
            let x = uniform_vector(&mut rng, d, 3.0);
            let y = uniform_vector(&mut rng, d, 3.0);
            let gap = strong_gap_sample(problem, &x, &reference.x, reference.phi).unwrap();
            assert!(
                gap.normalized_slack() >= -SAMPLED_SLACK_TOL,
                "strong gap violated on instance {i}: {}",
                gap.normalized_slack()
            );
            let piv = pivotal_sample(problem, &x, &y, s).unwrap();
            assert!(
                piv.normalized_slack() >= -SAMPLED_SLACK_TOL,
                "pivotal violated on instance {i}: {}",
                piv.normalized_slack()
            );
        }
    }
}

// Dropping the strong-convexity term only enlarges the right-hand side, so
// the convex-form slack dominates pointwise; the difference is exactly
// (mu/2)*||y - x||^2.
#[test]
fn convex_pivotal_slack_dominates_strongly_convex_slack() {
    let instance = dense_instance(95, 20, 12, 0.8, 4.0, 0.1);
    let problem = &instance.problem;
    let mu = problem.mu();
    let s = 0.2;
    let mut rng = seeded_rng(96);
    for _ in 0..200 {
        let x = uniform_vector(&mut rng, 12, 3.0);
        let y = uniform_vector(&mut rng, 12, 3.0);
        let strong = pivotal_sample(problem, &x, &y, s).unwrap();
        let convex = pivotal_sample_convex(problem, &x, &y, s).unwrap();
        let term = 0.5 * mu * (&y - &x).norm_squared();
        assert!(convex.slack() >= strong.slack() - 1e-12 * (1.0 + term));
        assert!(
            ((convex.slack() - strong.slack()) - term).abs() <= 1e-9 * (1.0 + term),
            "slack difference is not the strong-convexity term"
        );
    }
}

#[test]
fn envelope_shapes_constants_and_refusals() {
    let (s, mu, l, dist0_sq) = (0.2, 0.5, 4.0, 3.7);
    let (obj, grad) = ista_envelopes(s, mu, l, dist0_sq).unwrap();
    let rho = (1.0 - mu * s) / (1.0 + mu * s);
    assert_eq!(obj.constant(), dist0_sq / s);
    assert_eq!(grad.constant(), 4.0 * dist0_sq / (s * s));
    match obj.form() {
        EnvelopeForm::Power { ratio } => assert_eq!(ratio, rho),
        other => panic!("unexpected form {other:?}"),
    }
    assert_eq!(obj.evaluate(0), obj.constant());
    for k in 0..200 {
        assert!(obj.evaluate(k + 1) <= obj.evaluate(k));
        assert!(grad.evaluate(k + 1) <= grad.evaluate(k));
    }

    assert!(matches!(
        ista_envelopes(0.3, mu, l, dist0_sq),
        Err(Error::Hypothesis(_))
    ));
    assert!(ista_envelopes(s, 5.0, l, dist0_sq).is_err());
    assert!(ista_envelopes(s, mu, l, -1.0).is_err());
    assert!(ista_envelopes(-0.1, mu, l, dist0_sq).is_err());
}

#[test]
fn fista_envelope_constants_and_step_singularity() {
    let (mu, l, dist0_sq) = (0.4, 4.0, 2.0);
    let s = 0.125;
    let env = fista_envelopes(s, mu, l, 1.5, dist0_sq).unwrap();
    assert_eq!(env.beta, (mu * s).sqrt() / 4.0);
    assert_eq!(env.objective.constant(), 1.5 + mu * dist0_sq);
    assert_eq!(
        env.simplified_objective.constant(),
        11.0 * dist0_sq / (2.0 * s)
    );
    let one_minus_sl = 1.0 - s * l;
    assert_eq!(
        env.gradient.unwrap().constant(),
        2.0 * (1.5 + mu * dist0_sq) / (s * one_minus_sl)
    );
    assert_eq!(
        env.simplified_gradient.unwrap().constant(),
        11.0 * dist0_sq / (s * s * one_minus_sl)
    );

    // The gradient bound carries a 1/(1 - sL) factor: at s = 1/L only the
    // objective envelopes survive.
    let at_limit = fista_envelopes(0.25, mu, l, 1.5, dist0_sq).unwrap();
    assert!(at_limit.gradient.is_none());
    assert!(at_limit.simplified_gradient.is_none());
    assert!(fista_envelopes(0.26, mu, l, 1.5, dist0_sq).is_err());

    // A starting point that already beats the reference surrogate enters the
    // constants with its gap floored at zero.
    let floored = fista_envelopes(s, mu, l, -0.3, dist0_sq).unwrap();
    assert_eq!(floored.objective.constant(), mu * dist0_sq);
}

#[test]
fn initial_phase_space_lyapunov_is_gap_plus_weighted_distance() {
    let instance = dense_instance(102, 12, 7, 0.4, 4.0, 0.05);
    let problem = &instance.problem;
    let reference = reference_solution(problem, 1e-12).unwrap();
    let x0 = DVector::from_element(7, 0.3);
    let stop = StoppingRule::new(5, 0.0).unwrap();
    let trace = fista_phase_space(problem, &x0, 0.125, &stop).unwrap();
    let series = fista_lyapunov(problem, &trace, &reference.x, reference.phi).unwrap();
    let gap0 = problem.objective(&x0).unwrap() - reference.phi;
    let expect = gap0 + problem.mu() * (&x0 - &reference.x).norm_squared();
    assert!(
        (series[0] - expect).abs() <= 1e-12 * (1.0 + expect.abs()),
        "E(0) = {} vs gap0 + mu*dist0^2 = {expect}",
        series[0]
    );
}

#[test]
fn momentum_traces_have_no_velocity_series() {
    let instance = dense_instance(103, 10, 6, 0.4, 4.0, 0.05);
    let problem = &instance.problem;
    let reference = reference_solution(problem, 1e-10).unwrap();
    let stop = StoppingRule::new(5, 0.0).unwrap();
    let trace = fista_momentum(problem, &DVector::zeros(6), 0.125, &stop).unwrap();
    assert!(matches!(
        fista_lyapunov(problem, &trace, &reference.x, reference.phi),
        Err(Error::MissingTraceData(_))
    ));
}

#[test]
fn full_certification_passes_and_fills_columns() {
    let instance = dense_instance(104, 16, 10, 0.4, 4.0, 0.05);
    let problem = &instance.problem;
    let reference = reference_solution(problem, 1e-13).unwrap();
    let stop = StoppingRule::new(400, 0.0).unwrap();
    let mut trace = fista_phase_space(problem, &DVector::zeros(10), 0.125, &stop).unwrap();
    let report = certify_solver_trace(problem, &mut trace, &reference).unwrap();
    assert!(report.all_pass(), "certificate failed: {report:?}");
    let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "objective_envelope",
            "gradient_envelope",
            "objective_envelope_simplified",
            "gradient_envelope_simplified",
            "lyapunov_decay_explicit",
            "lyapunov_decay_simplified",
            "strong_gap",
            "pivotal (step-scaled)",
        ]
    );
    assert!(report.checks.iter().all(|c| c.tested >= trace.records.len() - 1));
    for r in &trace.records {
        assert!(r.objective_gap_x.is_some());
        assert!(r.objective_gap_y.is_some());
        assert!(r.lyapunov.is_some());
        assert!(r.envelope_obj.is_some());
        assert!(r.envelope_grad.is_some());
    }
}

#[test]
fn violated_envelope_reports_negative_slack_unclamped() {
    let instance = dense_instance(105, 12, 8, 0.4, 4.0, 0.05);
    let problem = &instance.problem;
    let reference = reference_solution(problem, 1e-12).unwrap();
    let s = 0.125;
    let stop = StoppingRule::new(60, 0.0).unwrap();
    let mut trace = ista(problem, &DVector::zeros(8), s, &stop).unwrap();
    let rho = (1.0 - problem.mu() * s) / (1.0 + problem.mu() * s);
    // An envelope a million times too small cannot dominate anything.
    let envelopes = EnvelopeSet::Ista {
        objective: RateEnvelope::power(1e-6, rho).unwrap(),
        gradient: RateEnvelope::power(1e-6, rho).unwrap(),
    };
    let report = certify_trace(problem, &mut trace, &envelopes, &reference).unwrap();
    assert!(!report.all_pass());
    let obj = report
        .checks
        .iter()
        .find(|c| c.name == "objective_envelope")
        .unwrap();
    assert!(!obj.pass);
    assert!(obj.worst_slack < 0.0, "violations must stay signed");
    assert!(obj.worst_slack.is_finite());

    let sane = build_envelopes(problem, &trace, &reference).unwrap();
    let report = certify_trace(problem, &mut trace, &sane, &reference).unwrap();
    assert!(report.all_pass());
}

#[test]
fn out_of_regime_traces_are_marked_uncertifiable() {
    let l = 4.0;
    let instance = dense_instance(106, 12, 6, 0.4, l, 0.0);
    let problem = &instance.problem;
    let reference = reference_solution(problem, 1e-10).unwrap();

    let stop = StoppingRule::new(40, 0.0).unwrap();
    let mut warned = ista(problem, &DVector::zeros(6), 1.2 / l, &stop).unwrap();
    let report = certify_solver_trace(problem, &mut warned, &reference).unwrap();
    assert!(!report.all_pass());
    assert!(report.checks.is_empty());
    assert!(report.uncertifiable.as_deref().unwrap().contains("exceeds"));

    let stop = StoppingRule::new(2000, 0.0).unwrap();
    let mut diverged = ista(problem, &DVector::zeros(6), 10.0 / l, &stop).unwrap();
    assert!(diverged.divergent);
    let report = certify_solver_trace(problem, &mut diverged, &reference).unwrap();
    assert!(!report.all_pass());
    assert!(report.uncertifiable.as_deref().unwrap().contains("diverged"));
}

#[test]
fn sweeps_count_samples_and_normalize_slacks() {
    let instance = dense_instance(107, 12, 6, 0.4, 4.0, 0.1);
    let problem = &instance.problem;
    let reference = reference_solution(problem, 1e-11).unwrap();
    let mut rng = seeded_rng(108);
    let pairs: Vec<_> = (0..64)
        .map(|_| {
            (
                uniform_vector(&mut rng, 6, 2.0),
                uniform_vector(&mut rng, 6, 2.0),
            )
        })
        .collect();
    let result = sweep_pivotal(problem, 0.125, &pairs).unwrap();
    assert_eq!(result.tested, 64);
    assert!(result.pass);
    assert!(result.worst_index < 64);
    assert!(result.worst_slack.abs() < 1.0, "normalized slacks are O(1)");

    let points: Vec<_> = (0..32).map(|_| uniform_vector(&mut rng, 6, 2.0)).collect();
    let result = sweep_strong_gap(problem, &points, &reference.x, reference.phi).unwrap();
    assert_eq!(result.tested, 32);
    assert!(result.pass);
}
