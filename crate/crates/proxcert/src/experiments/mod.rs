//! Instance generators, experiment orchestration, and reference-solution
//! management.
//!
//! An experiment is described by an [`ExperimentConfig`] (JSON): one problem
//! instance, a list of solvers, a step policy, a stopping rule, and an output
//! directory. [`run_experiment`] solves with each method, certifies every
//! trace against a shared reference solution, and persists traces, reports,
//! plot data, the instance, and a comparison summary. All outputs are
//! deterministic: identical configs produce byte-identical files.

pub mod io;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::certify::certify_solver_trace;
use crate::parallel;
use crate::problem::{make_lasso, tridiagonal_spectrum, CompositeProblem, LinearOperator};
use crate::solvers::{
    fista_momentum, fista_phase_space, ista, reference_solution, Method, Reference, SolverTrace,
    StoppingRule, Termination,
};
use crate::{Error, Result};
use io::{save_plot_csv, save_report_json, save_trace_csv, TraceExtras};

pub const DEFAULT_REFERENCE_TOL: f64 = 1e-13;
pub const DEFAULT_SUMMARY_THRESHOLD: f64 = 1e-12;

/// Serializable description of the linear operator in an instance file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    Dense { rows: Vec<Vec<f64>> },
    Tridiagonal { dim: usize, diag: f64, offdiag: f64 },
}

/// On-disk lasso instance: operator, right-hand side, l1 weight, and the
/// strong-convexity / smoothness constants of the quadratic part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub kind: OperatorKind,
    pub b: Vec<f64>,
    pub lambda: f64,
    pub mu: f64,
    pub lipschitz: f64,
}

impl InstanceFile {
    pub fn operator(&self) -> Result<LinearOperator> {
        match &self.kind {
            OperatorKind::Dense { rows } => {
                let m = rows.len();
                if m == 0 {
                    return Err(Error::Config("dense operator has no rows".into()));
                }
                let d = rows[0].len();
                if d == 0 || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::Config(
                        "dense operator rows must be nonempty and equal-length".into(),
                    ));
                }
                LinearOperator::dense(DMatrix::from_fn(m, d, |i, j| rows[i][j]))
            }
            OperatorKind::Tridiagonal { dim, diag, offdiag } => {
                LinearOperator::sym_tridiagonal(*dim, *diag, *offdiag)
            }
        }
    }

    pub fn problem(&self) -> Result<CompositeProblem> {
        make_lasso(
            self.operator()?,
            DVector::from_vec(self.b.clone()),
            self.lambda,
            self.mu,
            self.lipschitz,
        )
    }
}

/// A built instance: the problem plus its serializable description, a
/// sensible default step, and a short name used in file names.
#[derive(Debug)]
pub struct Instance {
    pub problem: CompositeProblem,
    pub file: InstanceFile,
    pub default_step: f64,
    pub name: String,
}

fn instance_from_file(file: InstanceFile, name: String) -> Result<Instance> {
    let problem = file.problem()?;
    let default_step = if file.lipschitz > 0.0 {
        1.0 / file.lipschitz
    } else {
        1.0
    };
    Ok(Instance {
        problem,
        file,
        default_step,
        name,
    })
}

/// The built-in benchmark instance: `A` symmetric tridiagonal with diagonal
/// 2 and off-diagonal 1 at dimension 500, `b` all ones, `lambda = 1e-6`,
/// default step 0.05. The Gram matrix `A^T A` is severely ill conditioned
/// (condition number around 1e10), which makes unaccelerated convergence
/// visibly slow and acceleration easy to see.
pub fn build_benchmark_instance() -> Result<Instance> {
    let n = 500;
    let (mu, lipschitz) = tridiagonal_spectrum(n, 2.0, 1.0)?;
    let file = InstanceFile {
        kind: OperatorKind::Tridiagonal {
            dim: n,
            diag: 2.0,
            offdiag: 1.0,
        },
        b: vec![1.0; n],
        lambda: 1e-6,
        mu,
        lipschitz,
    };
    let problem = file.problem()?;
    Ok(Instance {
        problem,
        file,
        default_step: 0.05,
        name: "tridiag-500".into(),
    })
}

/// Builds a dense random lasso instance with exactly prescribed extreme
/// curvatures: `A = U diag(sigma) V^T` with orthonormal factors drawn from
/// the seeded generator (ChaCha8, so identical seeds give bit-identical
/// instances) and singular values interpolating
/// `[sqrt(mu_target), sqrt(l_target)]` linearly, making `mu` and `L` of the
/// Gram matrix exact by construction. `b` is standard normal from the same
/// generator.
pub fn build_random_lasso(
    m: usize,
    d: usize,
    mu_target: f64,
    l_target: f64,
    seed: u64,
    lambda: f64,
) -> Result<Instance> {
    if d == 0 {
        return Err(Error::InvalidParameter("d must be >= 1".into()));
    }
    if m < d {
        return Err(Error::InvalidParameter(format!(
            "need m >= d (got m={m}, d={d}); a wide A has singular Gram matrix (mu = 0)"
        )));
    }
    if !(mu_target.is_finite() && l_target.is_finite() && mu_target > 0.0 && mu_target <= l_target)
    {
        return Err(Error::InvalidParameter(format!(
            "need 0 < mu_target <= l_target, got {mu_target}, {l_target}"
        )));
    }
    if d == 1 && mu_target != l_target {
        return Err(Error::InvalidParameter(
            "d = 1 admits a single singular value; mu_target must equal l_target".into(),
        ));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Row-major sampling so the draw order is explicit and reproducible.
    let mut gaussian = |rows: usize, cols: usize| -> DMatrix<f64> {
        let data: Vec<f64> = (0..rows * cols)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        DMatrix::from_row_slice(rows, cols, &data)
    };
    let u = gaussian(m, d).qr().q();
    let v = gaussian(d, d).qr().q();
    let root_mu = mu_target.sqrt();
    let root_l = l_target.sqrt();
    let sigma: Vec<f64> = if d == 1 {
        vec![root_mu]
    } else {
        (0..d)
            .map(|i| root_mu + (root_l - root_mu) * i as f64 / (d - 1) as f64)
            .collect()
    };
    let a = &u * DMatrix::from_diagonal(&DVector::from_vec(sigma)) * v.transpose();
    let b: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let rows: Vec<Vec<f64>> = (0..m).map(|i| a.row(i).iter().copied().collect()).collect();
    let file = InstanceFile {
        kind: OperatorKind::Dense { rows },
        b,
        lambda,
        mu: mu_target,
        lipschitz: l_target,
    };
    instance_from_file(file, format!("random-lasso-m{m}-d{d}-seed{seed}"))
}

pub fn save_instance(path: &Path, file: &InstanceFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(file)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_instance(path: &Path) -> Result<Instance> {
    let file: InstanceFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "instance".into());
    instance_from_file(file, name)
}

/// Instance selector in an experiment config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSpec {
    Tridiagonal {
        n: usize,
        diag: f64,
        offdiag: f64,
        b_fill: f64,
        lambda: f64,
    },
    RandomLasso {
        m: usize,
        d: usize,
        mu_target: f64,
        #[serde(rename = "L_target")]
        l_target: f64,
        seed: u64,
        lambda: f64,
    },
    File {
        path: PathBuf,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<Instance> {
        match self {
            InstanceSpec::Tridiagonal {
                n,
                diag,
                offdiag,
                b_fill,
                lambda,
            } => {
                if !b_fill.is_finite() {
                    return Err(Error::Config("b_fill must be finite".into()));
                }
                let (mu, lipschitz) = tridiagonal_spectrum(*n, *diag, *offdiag)?;
                let file = InstanceFile {
                    kind: OperatorKind::Tridiagonal {
                        dim: *n,
                        diag: *diag,
                        offdiag: *offdiag,
                    },
                    b: vec![*b_fill; *n],
                    lambda: *lambda,
                    mu,
                    lipschitz,
                };
                instance_from_file(file, format!("tridiag-{n}"))
            }
            InstanceSpec::RandomLasso {
                m,
                d,
                mu_target,
                l_target,
                seed,
                lambda,
            } => build_random_lasso(*m, *d, *mu_target, *l_target, *seed, *lambda),
            InstanceSpec::File { path } => load_instance(path),
        }
    }
}

/// Step policy: a fixed positive real, or the keyword `"one_over_L"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSpec {
    Fixed(f64),
    OneOverL,
}

impl StepSpec {
    pub fn resolve(&self, lipschitz: f64) -> Result<f64> {
        match self {
            StepSpec::Fixed(v) => {
                if v.is_finite() && *v > 0.0 {
                    Ok(*v)
                } else {
                    Err(Error::Config(format!(
                        "step must be a positive finite real, got {v}"
                    )))
                }
            }
            StepSpec::OneOverL => {
                if lipschitz > 0.0 && lipschitz.is_finite() {
                    Ok(1.0 / lipschitz)
                } else {
                    Err(Error::Config(format!(
                        "step one_over_L needs 0 < L < inf, got L = {lipschitz}"
                    )))
                }
            }
        }
    }
}

impl Serialize for StepSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StepSpec::Fixed(v) => serializer.serialize_f64(*v),
            StepSpec::OneOverL => serializer.serialize_str("one_over_L"),
        }
    }
}

impl<'de> Deserialize<'de> for StepSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Word(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) => Ok(StepSpec::Fixed(v)),
            Repr::Word(w) if w == "one_over_L" => Ok(StepSpec::OneOverL),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "unknown step keyword '{w}' (expected a number or \"one_over_L\")"
            ))),
        }
    }
}

/// Starting point: all zeros, or a JSON array of reals in a file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum X0Spec {
    #[default]
    Zeros,
    File(PathBuf),
}

impl X0Spec {
    pub fn resolve(&self, dimension: usize) -> Result<DVector<f64>> {
        match self {
            X0Spec::Zeros => Ok(DVector::zeros(dimension)),
            X0Spec::File(path) => {
                let values: Vec<f64> = serde_json::from_str(&fs::read_to_string(path)?)?;
                if values.len() != dimension {
                    return Err(Error::Shape {
                        context: "x0 file",
                        expected: dimension,
                        got: values.len(),
                    });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("x0 file contains non-finite entries".into()));
                }
                Ok(DVector::from_vec(values))
            }
        }
    }
}

fn default_step_spec() -> StepSpec {
    StepSpec::OneOverL
}

fn default_reference_tol() -> f64 {
    DEFAULT_REFERENCE_TOL
}

fn default_summary_threshold() -> f64 {
    DEFAULT_SUMMARY_THRESHOLD
}

/// Experiment description (JSON). Unknown fields are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub solvers: Vec<Method>,
    #[serde(default = "default_step_spec")]
    pub step: StepSpec,
    #[serde(default)]
    pub x0: X0Spec,
    pub stop: StoppingRule,
    /// Residual tolerance on `||G_s||` for the reference solve.
    #[serde(default = "default_reference_tol")]
    pub reference_tol: f64,
    pub output_dir: PathBuf,
    /// `||G_s||^2` threshold used for the iterations-to-threshold column of
    /// the comparison summary.
    #[serde(default = "default_summary_threshold")]
    pub summary_threshold: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty() {
            return Err(Error::Config("solver list is empty".into()));
        }
        for (i, a) in self.solvers.iter().enumerate() {
            if self.solvers[..i].contains(a) {
                return Err(Error::Config(format!(
                    "solver '{a}' listed twice; output files would collide"
                )));
            }
        }
        self.stop.validate()?;
        if !(self.reference_tol.is_finite() && self.reference_tol > 0.0) {
            return Err(Error::Config(format!(
                "reference_tol must be a positive finite real, got {}",
                self.reference_tol
            )));
        }
        if !(self.summary_threshold.is_finite() && self.summary_threshold >= 0.0) {
            return Err(Error::Config(format!(
                "summary_threshold must be finite and nonnegative, got {}",
                self.summary_threshold
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(&fs::read_to_string(path)?)?;
        config.validate()?;
        Ok(config)
    }
}

/// Runs one recording solve with the chosen method.
pub fn run_solver(
    problem: &CompositeProblem,
    method: Method,
    x0: &DVector<f64>,
    s: f64,
    stop: &StoppingRule,
) -> Result<SolverTrace> {
    match method {
        Method::Ista => ista(problem, x0, s, stop),
        Method::FistaMomentum => fista_momentum(problem, x0, s, stop),
        Method::FistaPhaseSpace => fista_phase_space(problem, x0, s, stop),
    }
}

/// Per-solver entry of the comparison summary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverOutcome {
    pub method: Method,
    pub iterations: usize,
    pub terminated_by: Termination,
    pub divergent: bool,
    pub final_gs_norm_sq: f64,
    pub final_objective_gap: f64,
    /// True when every certificate check passed.
    pub certified: bool,
    pub uncertifiable: Option<String>,
    /// First iteration with `||G_s||^2 <= summary_threshold`, if reached.
    pub iterations_to_threshold: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReferenceSummary {
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub phi: f64,
}

/// The comparison summary written as `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub instance: String,
    pub step: f64,
    pub threshold: f64,
    pub reference: ReferenceSummary,
    pub solvers: Vec<SolverOutcome>,
}

fn run_one_solver(
    problem: &CompositeProblem,
    method: Method,
    x0: &DVector<f64>,
    s: f64,
    config: &ExperimentConfig,
    reference: &Reference,
) -> Result<SolverOutcome> {
    let mut trace = run_solver(problem, method, x0, s, &config.stop)?;
    if let X0Spec::File(path) = &config.x0 {
        // Keep the trace re-derivable: record where x0 came from instead of
        // the opaque "other" tag.
        trace.meta.x0 = crate::solvers::StartPoint::File(path.display().to_string());
    }
    let report = certify_solver_trace(problem, &mut trace, reference)?;
    let final_rec = trace.final_record();
    let final_objective_gap = match final_rec.objective_gap_x {
        Some(gap) => gap,
        // Uncertified traces have no filled gap columns; compute directly.
        None => problem.objective(final_rec.main_iterate())? - reference.phi,
    };
    let dist0_sq = (&trace.records[0].y - &reference.x).norm_squared();
    let phi_gap0 = problem.objective(trace.records[0].main_iterate())? - reference.phi;
    let extras = TraceExtras {
        reference_residual: Some(reference.residual),
        reference_tol: Some(config.reference_tol),
        dist0_sq: Some(dist0_sq),
        phi_gap0: Some(phi_gap0),
    };
    let tag = method.as_str();
    save_trace_csv(
        &config.output_dir.join(format!("trace-{tag}.csv")),
        &trace,
        &extras,
    )?;
    save_report_json(
        &config.output_dir.join(format!("report-{tag}.json")),
        &report,
    )?;
    let ks: Vec<usize> = trace.records.iter().map(|r| r.k).collect();
    let gs: Vec<f64> = trace.records.iter().map(|r| r.gs_norm_sq).collect();
    let envelope: Option<Vec<f64>> = trace.records.iter().map(|r| r.envelope_grad).collect();
    save_plot_csv(
        &config.output_dir.join(format!("plot-{tag}.csv")),
        &ks,
        &gs,
        envelope.as_deref(),
        false,
    )?;
    Ok(SolverOutcome {
        method,
        iterations: trace.iterations(),
        terminated_by: trace.terminated_by,
        divergent: trace.divergent,
        final_gs_norm_sq: final_rec.gs_norm_sq,
        final_objective_gap,
        certified: report.all_pass(),
        uncertifiable: report.uncertifiable,
        iterations_to_threshold: trace
            .records
            .iter()
            .find(|r| r.gs_norm_sq <= config.summary_threshold)
            .map(|r| r.k),
    })
}

/// Runs the full experiment: builds the instance, computes one shared
/// reference solution, then (in parallel) solves with every listed method,
/// certifies, and writes `trace-*.csv`, `report-*.json`, `plot-*.csv`,
/// `instance.json`, and `summary.json` under the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    config.validate()?;
    let instance = config.instance.build()?;
    let problem = &instance.problem;
    let s = config.step.resolve(problem.lipschitz())?;
    let x0 = config.x0.resolve(problem.dimension)?;
    fs::create_dir_all(&config.output_dir)?;
    save_instance(&config.output_dir.join("instance.json"), &instance.file)?;
    let reference = reference_solution(problem, config.reference_tol)?;
    let outcomes: Vec<Result<SolverOutcome>> = parallel::map_collect(config.solvers.len(), |i| {
        run_one_solver(problem, config.solvers[i], &x0, s, config, &reference)
    });
    let solvers = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = ExperimentSummary {
        instance: instance.name.clone(),
        step: s,
        threshold: config.summary_threshold,
        reference: ReferenceSummary {
            residual: reference.residual,
            iterations: reference.iterations,
            converged: reference.converged,
            phi: reference.phi,
        },
        solvers,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(config.output_dir.join("summary.json"), text)?;
    Ok(summary)
}

/// Empirical per-iteration decay ratio of a positive series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TailRate {
    /// `exp(slope)` of the least-squares fit of `ln(value)` vs `k`; < 1
    /// means geometric decay.
    pub ratio: f64,
    /// Number of records entering the fit.
    pub used: usize,
    /// True when the tail hit a nonpositive/non-finite value and only the
    /// positive prefix was used.
    pub truncated: bool,
}

/// Fits the per-iteration decay ratio of `||G_s||^2` over the last half of
/// a trace (log-scale least squares). Needs at least 20 positive records in
/// the window; a zero mid-window truncates the fit to the positive prefix.
pub fn tail_rate_estimate(trace: &SolverTrace) -> Result<TailRate> {
    let gs: Vec<f64> = trace.records.iter().map(|r| r.gs_norm_sq).collect();
    tail_rate_from_series(&gs)
}

/// Series-level form of [`tail_rate_estimate`]; indices are positions in
/// `series`.
pub fn tail_rate_from_series(series: &[f64]) -> Result<TailRate> {
    let start = series.len() / 2;
    let mut points: Vec<(f64, f64)> = Vec::with_capacity(series.len() - start);
    let mut truncated = false;
    for (offset, &v) in series[start..].iter().enumerate() {
        if v.is_finite() && v > 0.0 {
            points.push(((start + offset) as f64, v.ln()));
        } else {
            truncated = true;
            break;
        }
    }
    if points.len() < 20 {
        return Err(Error::InvalidParameter(format!(
            "tail-rate fit needs >= 20 positive records in the final half, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in &points {
        num += (x - mean_x) * (y - mean_y);
        den += (x - mean_x) * (x - mean_x);
    }
    Ok(TailRate {
        ratio: (num / den).exp(),
        used: points.len(),
        truncated,
    })
}
