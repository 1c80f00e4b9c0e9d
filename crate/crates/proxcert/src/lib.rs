//! Proximal-gradient solvers with certified linear convergence envelopes.
//!
//! This crate solves composite problems `Phi(x) = f(x) + g(x)` where `f` is
//! `mu`-strongly convex with an `L`-Lipschitz gradient and `g` is convex but
//! possibly nonsmooth (the flagship case is the lasso,
//! `Phi(x) = 0.5*||A x - b||^2 + lambda*||x||_1`). Beyond running ISTA and
//! FISTA it *certifies* each run: every trace is checked, record by record,
//! against closed-form linear-rate envelopes for the objective gap and the
//! squared prox-subgradient norm, against per-step Lyapunov decay, and
//! against the sampled inequalities the rates rest on. Certificates report
//! signed slacks and never clamp.
//!
//! Module map:
//!
//! * [`problem`]: linear operators, smooth/nonsmooth oracles, lasso
//!   assembly, tridiagonal spectra, Lipschitz estimation.
//! * [`prox`]: soft-thresholding and the s-prox map `P_s` / prox
//!   subgradient `G_s`.
//! * [`solvers`]: ISTA, FISTA (momentum and phase-space forms), traces,
//!   reference solutions.
//! * [`certify`]: rate envelopes, Lyapunov series, inequality checks,
//!   trace certification.
//! * [`experiments`]: instance builders, experiment configs and runs,
//!   trace/instance/report persistence, tail-rate estimation.
//!
//! With the default `parallel` feature the embarrassingly parallel sweeps
//! (sampled checks, per-record certification, batched soft-thresholding,
//! independent solver runs) use rayon; disabling the feature falls back to
//! sequential loops with bit-identical results.

pub mod certify;
pub mod experiments;
mod parallel;
pub mod problem;
pub mod prox;
pub mod solvers;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

pub use certify::{
    certify_solver_trace, certify_trace, check_pivotal, check_strong_gap, fista_envelopes,
    fista_lyapunov, ista_envelopes, ista_lyapunov, CertificateReport, CheckResult, EnvelopeSet,
    RateEnvelope,
};
pub use experiments::{
    build_benchmark_instance, build_random_lasso, run_experiment, tail_rate_estimate,
    ExperimentConfig, Instance,
};
pub use problem::{
    condition_number, estimate_lipschitz, make_lasso, tridiagonal_spectrum, CompositeProblem,
    LinearOperator, NonsmoothOracle, SmoothOracle,
};
pub use prox::{prox_point, prox_subgradient, soft_threshold, ProxEvaluation};
pub use solvers::{
    fista_momentum, fista_phase_space, ista, reference_solution, IterateRecord, Method, Reference,
    SolverTrace, StoppingRule, Termination,
};
