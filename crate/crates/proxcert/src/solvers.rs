//! ISTA and FISTA for strongly convex composite problems, with full
//! per-iterate traces.
//!
//! All three solvers advance by one prox-subgradient evaluation per recorded
//! iterate (`G_s` at the lookahead point `y_k`), so oracle instrumentation
//! shows exactly one gradient and one prox call per record:
//!
//! * ISTA: `y_{k+1} = y_k - s * G_s(y_k)`, i.e. exactly `P_s(y_k)`.
//! * FISTA (momentum form): `x_k = y_{k-1} - s * G_s(y_{k-1})`,
//!   `y_k = x_k + (x_k - x_{k-1}) / (1 + 2*sqrt(mu*s))`, `y_0 = x_0`.
//! * FISTA (phase-space form): velocity `v` with `v_0 = 0`,
//!   `y_k = x_k + sqrt(s) * v_k / (1 + 2*sqrt(mu*s))`,
//!   `v_{k+1} = v_k - 2*sqrt(mu*s)*v_k/(1 + 2*sqrt(mu*s)) - sqrt(s)*G_s(y_k)`,
//!   `x_{k+1} = x_k + sqrt(s) * v_{k+1}`.
//!
//! The two FISTA forms are algebraically identical; both are kept because
//! the phase-space form carries the velocities the Lyapunov certificate
//! needs.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::problem::CompositeProblem;
use crate::prox::prox_subgradient;
use crate::{Error, Result};

/// Iteration budget and gradient tolerance (on `||G_s||^2`). A run stops at
/// the first record with `gs_norm_sq <= grad_tol`, else after `max_iters`
/// iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoppingRule {
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl StoppingRule {
    pub fn new(max_iters: usize, grad_tol: f64) -> Result<Self> {
        let rule = StoppingRule { max_iters, grad_tol };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !self.grad_tol.is_finite() || self.grad_tol < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "grad_tol must be finite and nonnegative, got {}",
                self.grad_tol
            )));
        }
        Ok(())
    }
}

/// Solver selector, also the on-disk method tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ista")]
    Ista,
    #[serde(rename = "fista", alias = "fista_momentum")]
    FistaMomentum,
    #[serde(rename = "fista-phase", alias = "fista_phase_space")]
    FistaPhaseSpace,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Ista => "ista",
            Method::FistaMomentum => "fista",
            Method::FistaPhaseSpace => "fista-phase",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        match s {
            "ista" => Ok(Method::Ista),
            "fista" | "fista_momentum" => Ok(Method::FistaMomentum),
            "fista-phase" | "fista_phase_space" => Ok(Method::FistaPhaseSpace),
            other => Err(Error::InvalidParameter(format!(
                "unknown method '{other}' (expected ista, fista, or fista-phase)"
            ))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Why a run stopped. Meaningful only when the trace's divergence flag is
/// clear; a diverged run stops early regardless.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    #[serde(rename = "tolerance")]
    Tolerance,
    #[serde(rename = "max_iters")]
    MaxIters,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Tolerance => "tolerance",
            Termination::MaxIters => "max_iters",
        }
    }

    pub fn parse(s: &str) -> Result<Termination> {
        match s {
            "tolerance" => Ok(Termination::Tolerance),
            "max_iters" => Ok(Termination::MaxIters),
            other => Err(Error::Parse(format!("unknown termination tag '{other}'"))),
        }
    }
}

/// How the starting point was chosen; persisted so a trace can be re-derived
/// from its metadata.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StartPoint {
    #[serde(rename = "zeros")]
    Zeros,
    #[serde(rename = "file")]
    File(String),
    /// Supplied programmatically; not re-derivable from metadata alone.
    #[serde(rename = "other")]
    Other,
}

/// One recorded iterate.
///
/// `y` is always the point where `G_s` was evaluated. `x` is the FISTA main
/// iterate (absent for ISTA, where it coincides with `y`); `v` is the
/// phase-space velocity (absent for the other methods). The certification
/// fields (`objective_gap_*`, `lyapunov`, `envelope_*`) are filled by
/// [`crate::certify::certify_trace`], not by the solver.
#[derive(Clone, Debug, PartialEq)]
pub struct IterateRecord {
    pub k: usize,
    pub y: DVector<f64>,
    pub x: Option<DVector<f64>>,
    pub v: Option<DVector<f64>>,
    /// `||G_s(y_k)||^2`, computed from the same prox evaluation that
    /// produced the next iterate.
    pub gs_norm_sq: f64,
    pub step: f64,
    /// `Phi(x_k) - Phi_ref`.
    pub objective_gap_x: Option<f64>,
    /// `Phi(y_k) - Phi_ref`.
    pub objective_gap_y: Option<f64>,
    pub lyapunov: Option<f64>,
    pub envelope_obj: Option<f64>,
    pub envelope_grad: Option<f64>,
}

impl IterateRecord {
    fn new(k: usize, y: DVector<f64>, x: Option<DVector<f64>>, v: Option<DVector<f64>>, gs_norm_sq: f64, step: f64) -> Self {
        IterateRecord {
            k,
            y,
            x,
            v,
            gs_norm_sq,
            step,
            objective_gap_x: None,
            objective_gap_y: None,
            lyapunov: None,
            envelope_obj: None,
            envelope_grad: None,
        }
    }

    /// The main iterate: `x` where distinct, else `y` (ISTA).
    pub fn main_iterate(&self) -> &DVector<f64> {
        self.x.as_ref().unwrap_or(&self.y)
    }
}

/// Problem constants a trace was produced under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub mu: f64,
    pub lipschitz: f64,
    pub step: f64,
    pub lambda: Option<f64>,
    pub dimension: usize,
    pub x0: StartPoint,
}

/// Full record of one solver run.
#[derive(Clone, Debug, PartialEq)]
pub struct SolverTrace {
    pub method: Method,
    pub records: Vec<IterateRecord>,
    pub meta: TraceMeta,
    pub terminated_by: Termination,
    /// Set when a non-finite iterate or `gs_norm_sq` stopped the run.
    pub divergent: bool,
    /// Set when the run used `s > 1/L`; such traces are outside every
    /// rate guarantee and are refused by certification.
    pub step_warning: bool,
    /// Set when `mu = 0`: the momentum coefficient degenerates to 1.
    pub mu_zero_momentum: bool,
}

impl SolverTrace {
    pub fn final_record(&self) -> &IterateRecord {
        self.records.last().expect("trace always has a k=0 record")
    }

    /// Number of iterations performed (records minus the k=0 snapshot).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

/// Momentum coefficient `1 / (1 + 2*sqrt(mu*s))`.
///
/// Degenerates to 1 at `mu = 0` (no strong convexity to exploit).
pub fn momentum_coefficient(mu: f64, s: f64) -> f64 {
    1.0 / (1.0 + 2.0 * (mu * s).sqrt())
}

fn all_finite(x: &DVector<f64>) -> bool {
    x.iter().all(|v| v.is_finite())
}

fn validate_solve_inputs(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    s: f64,
    stop: &StoppingRule,
) -> Result<bool> {
    if x0.len() != problem.dimension {
        return Err(Error::Shape {
            context: "solver x0",
            expected: problem.dimension,
            got: x0.len(),
        });
    }
    if !all_finite(x0) {
        return Err(Error::InvalidParameter("x0 must be finite".into()));
    }
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "step must be finite and positive, got {s}"
        )));
    }
    stop.validate()?;
    let lipschitz = problem.lipschitz();
    // s > 1/L voids every rate guarantee; warn via flag, do not refuse.
    Ok(lipschitz > 0.0 && s > 1.0 / lipschitz)
}

fn start_point_of(x0: &DVector<f64>) -> StartPoint {
    if x0.iter().all(|&v| v == 0.0) {
        StartPoint::Zeros
    } else {
        StartPoint::Other
    }
}

fn make_meta(problem: &CompositeProblem, s: f64, x0: &DVector<f64>) -> TraceMeta {
    TraceMeta {
        mu: problem.mu(),
        lipschitz: problem.lipschitz(),
        step: s,
        lambda: problem.nonsmooth.l1_weight,
        dimension: problem.dimension,
        x0: start_point_of(x0),
    }
}

/// Outcome of a drive loop, recording or not.
struct RunOutcome {
    terminated_by: Termination,
    divergent: bool,
    /// Index of the last evaluated iterate.
    last_k: usize,
    /// The last evaluated `y` and its `||G_s||^2`.
    last_y: DVector<f64>,
    last_gs_sq: f64,
}

/// Shared skeleton of all three solvers. `advance` maps the current `y`'s
/// prox evaluation to the next state and the next `y`; `sink` observes each
/// record. The loop owns tolerance/divergence bookkeeping so the three
/// methods cannot drift apart in termination semantics.
fn drive<State, Advance, Sink>(
    problem: &CompositeProblem,
    y0: DVector<f64>,
    mut state: State,
    s: f64,
    stop: &StoppingRule,
    mut advance: Advance,
    mut sink: Sink,
) -> Result<RunOutcome>
where
    Advance: FnMut(&mut State, &DVector<f64>, &crate::prox::ProxEvaluation) -> DVector<f64>,
    Sink: FnMut(usize, &DVector<f64>, &State, f64),
{
    let mut y = y0;
    let mut divergent = false;
    let mut terminated_by = Termination::MaxIters;
    let mut last_k = 0;
    let mut last_gs_sq = f64::NAN;
    for k in 0..=stop.max_iters {
        let eval = prox_subgradient(problem, &y, s)?;
        let gs_sq = eval.subgradient.norm_squared();
        if !gs_sq.is_finite() {
            divergent = true;
            break;
        }
        sink(k, &y, &state, gs_sq);
        last_k = k;
        last_gs_sq = gs_sq;
        if gs_sq <= stop.grad_tol {
            terminated_by = Termination::Tolerance;
            break;
        }
        if k == stop.max_iters {
            break;
        }
        let y_next = advance(&mut state, &y, &eval);
        if !all_finite(&y_next) {
            divergent = true;
            break;
        }
        y = y_next;
    }
    Ok(RunOutcome {
        terminated_by,
        divergent,
        last_k,
        last_y: y,
        last_gs_sq,
    })
}

/// Runs ISTA, recording every iterate.
pub fn ista(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    s: f64,
    stop: &StoppingRule,
) -> Result<SolverTrace> {
    let step_warning = validate_solve_inputs(problem, x0, s, stop)?;
    let mut records = Vec::new();
    let outcome = drive(
        problem,
        x0.clone(),
        (),
        s,
        stop,
        |_, _, eval| eval.mapped_point.clone(),
        |k, y, _, gs_sq| records.push(IterateRecord::new(k, y.clone(), None, None, gs_sq, s)),
    )?;
    finish_trace(Method::Ista, records, problem, s, x0, outcome, step_warning)
}

/// Runs FISTA in momentum form, recording every iterate.
pub fn fista_momentum(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    s: f64,
    stop: &StoppingRule,
) -> Result<SolverTrace> {
    let step_warning = validate_solve_inputs(problem, x0, s, stop)?;
    let coef = momentum_coefficient(problem.mu(), s);
    let mut records = Vec::new();
    let outcome = drive(
        problem,
        x0.clone(),
        x0.clone(), // state: current main iterate x_k
        s,
        stop,
        |x_cur, _, eval| {
            let x_next = eval.mapped_point.clone();
            let y_next = &x_next + (&x_next - &*x_cur) * coef;
            *x_cur = x_next;
            y_next
        },
        |k, y, x_cur, gs_sq| {
            records.push(IterateRecord::new(k, y.clone(), Some(x_cur.clone()), None, gs_sq, s))
        },
    )?;
    finish_trace(Method::FistaMomentum, records, problem, s, x0, outcome, step_warning)
}

/// Runs FISTA in phase-space form, recording every iterate including the
/// velocity `v_k = (x_k - x_{k-1}) / sqrt(s)` (with `v_0 = 0`).
pub fn fista_phase_space(
    problem: &CompositeProblem,
    x0: &DVector<f64>,
    s: f64,
    stop: &StoppingRule,
) -> Result<SolverTrace> {
    let step_warning = validate_solve_inputs(problem, x0, s, stop)?;
    let mu = problem.mu();
    let root_s = s.sqrt();
    let two_root_mus = 2.0 * (mu * s).sqrt();
    let denom = 1.0 + two_root_mus;
    let mut records = Vec::new();
    let state0 = (x0.clone(), DVector::zeros(x0.len())); // (x_k, v_k)
    let outcome = drive(
        problem,
        x0.clone(),
        state0,
        s,
        stop,
        |state, _, eval| {
            let (x_cur, v_cur) = state;
            let v_next = &*v_cur - &*v_cur * (two_root_mus / denom) - &eval.subgradient * root_s;
            let x_next = &*x_cur + &v_next * root_s;
            let y_next = &x_next + &v_next * (root_s / denom);
            *x_cur = x_next;
            *v_cur = v_next;
            y_next
        },
        |k, y, state, gs_sq| {
            records.push(IterateRecord::new(
                k,
                y.clone(),
                Some(state.0.clone()),
                Some(state.1.clone()),
                gs_sq,
                s,
            ))
        },
    )?;
    finish_trace(Method::FistaPhaseSpace, records, problem, s, x0, outcome, step_warning)
}

fn finish_trace(
    method: Method,
    records: Vec<IterateRecord>,
    problem: &CompositeProblem,
    s: f64,
    x0: &DVector<f64>,
    outcome: RunOutcome,
    step_warning: bool,
) -> Result<SolverTrace> {
    if records.is_empty() {
        // G_s(x0) was already non-finite: nothing sane to trace.
        return Err(Error::InvalidParameter(
            "prox subgradient non-finite at x0; check problem scaling".into(),
        ));
    }
    let mu_zero_momentum = method != Method::Ista && problem.mu() == 0.0;
    Ok(SolverTrace {
        method,
        records,
        meta: make_meta(problem, s, x0),
        terminated_by: outcome.terminated_by,
        divergent: outcome.divergent,
        step_warning,
        mu_zero_momentum,
    })
}

/// Reference solution used as the optimum surrogate by certificates.
#[derive(Clone, Debug)]
pub struct Reference {
    pub x: DVector<f64>,
    /// `Phi(x)`; upper bound on the true optimal value.
    pub phi: f64,
    /// Achieved `||G_s(x)||` at `step`.
    pub residual: f64,
    pub step: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Iteration cap for [`reference_solution`]; generous because severely
/// ill-conditioned instances converge at rate `1 - O(sqrt(mu*s))`.
pub const REFERENCE_MAX_ITERS: usize = 20_000_000;

/// Computes a high-accuracy surrogate optimum by running momentum-form FISTA
/// at `s = 1/(2L)` (strictly inside `(0, 1/L)`) until `||G_s|| <= tol`,
/// without recording iterates.
///
/// Returns the final point, its objective value, and the achieved residual;
/// `converged = false` (never a silent success) when the cap was hit first.
pub fn reference_solution(problem: &CompositeProblem, tol: f64) -> Result<Reference> {
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "reference tolerance must be finite and positive, got {tol}"
        )));
    }
    let lipschitz = problem.lipschitz();
    let s = if lipschitz > 0.0 { 0.5 / lipschitz } else { 1.0 };
    let stop = StoppingRule::new(REFERENCE_MAX_ITERS, tol * tol)?;
    let x0 = DVector::zeros(problem.dimension);
    let coef = momentum_coefficient(problem.mu(), s);
    let outcome = drive(
        problem,
        x0.clone(),
        x0,
        s,
        &stop,
        |x_cur, _, eval| {
            let x_next = eval.mapped_point.clone();
            let y_next = &x_next + (&x_next - &*x_cur) * coef;
            *x_cur = x_next;
            y_next
        },
        |_, _, _, _| {},
    )?;
    let converged = outcome.terminated_by == Termination::Tolerance && !outcome.divergent;
    let phi = problem.objective(&outcome.last_y)?;
    Ok(Reference {
        x: outcome.last_y,
        phi,
        residual: outcome.last_gs_sq.sqrt(),
        step: s,
        converged,
        iterations: outcome.last_k,
    })
}

/// Result of a non-recording run against a `||G_s||^2` threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct ToleranceRun {
    /// First index `k` with `gs_norm_sq <= threshold`, if reached in time.
    pub crossed_at: Option<usize>,
    /// Last evaluated index.
    pub iterations: usize,
    pub divergent: bool,
}

/// Runs a solver without recording iterates and reports the first index at
/// which `||G_s||^2 <= threshold`, or `None` if the cap (or divergence)
/// came first. Memory stays O(dimension) regardless of iteration count.
pub fn solve_to_tolerance(
    problem: &CompositeProblem,
    method: Method,
    x0: &DVector<f64>,
    s: f64,
    threshold: f64,
    cap: usize,
) -> Result<ToleranceRun> {
    let stop = StoppingRule::new(cap, threshold)?;
    validate_solve_inputs(problem, x0, s, &stop)?;
    let noop = |_: usize, _: &DVector<f64>, _: &_, _: f64| {};
    let outcome = match method {
        Method::Ista => drive(
            problem,
            x0.clone(),
            (),
            s,
            &stop,
            |_, _, eval| eval.mapped_point.clone(),
            |_, _, _: &(), _| {},
        )?,
        Method::FistaMomentum => {
            let coef = momentum_coefficient(problem.mu(), s);
            drive(
                problem,
                x0.clone(),
                x0.clone(),
                s,
                &stop,
                |x_cur, _, eval| {
                    let x_next = eval.mapped_point.clone();
                    let y_next = &x_next + (&x_next - &*x_cur) * coef;
                    *x_cur = x_next;
                    y_next
                },
                noop,
            )?
        }
        Method::FistaPhaseSpace => {
            let mu = problem.mu();
            let root_s = s.sqrt();
            let two_root_mus = 2.0 * (mu * s).sqrt();
            let denom = 1.0 + two_root_mus;
            drive(
                problem,
                x0.clone(),
                (x0.clone(), DVector::zeros(x0.len())),
                s,
                &stop,
                |state, _, eval| {
                    let (x_cur, v_cur) = state;
                    let v_next =
                        &*v_cur - &*v_cur * (two_root_mus / denom) - &eval.subgradient * root_s;
                    let x_next = &*x_cur + &v_next * root_s;
                    let y_next = &x_next + &v_next * (root_s / denom);
                    *x_cur = x_next;
                    *v_cur = v_next;
                    y_next
                },
                |_, _, _, _| {},
            )?
        }
    };
    let crossed_at =
        (outcome.terminated_by == Termination::Tolerance && !outcome.divergent).then_some(outcome.last_k);
    Ok(ToleranceRun {
        crossed_at,
        iterations: outcome.last_k,
        divergent: outcome.divergent,
    })
}
