//! `proxcert` command-line frontend.
//!
//! Thin shell over the library: every command's effect is reproducible by
//! calling the library directly, and no numeric logic lives here.
//!
//! Exit codes: 0 success, 1 certification failure (including uncertifiable
//! traces), 2 usage/config/data error, 3 numerical divergence.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use proxcert::certify::certify_solver_trace;
use proxcert::experiments::io::{
    load_trace_csv, save_plot_csv, save_report_json, save_trace_csv, extract_series,
    PersistedTrace, TraceExtras, TraceSeries,
};
use proxcert::experiments::{
    build_benchmark_instance, load_instance, run_experiment, run_solver, save_instance,
    ExperimentConfig, Instance, OperatorKind,
};
use proxcert::problem::{condition_number, dense_gram_spectrum, tridiagonal_spectrum};
use proxcert::solvers::{reference_solution, Method, Reference, SolverTrace, StartPoint, StoppingRule};
use proxcert::{Error, Result};

const EXIT_CERT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "proxcert",
    version,
    about = "Proximal-gradient solvers with certified linear-rate envelopes",
    long_about = "Solve l1-regularized least-squares problems with ISTA/FISTA, certify the \
                  traces against closed-form convergence envelopes, and emit plot-ready data.\n\
                  Exit codes: 0 success, 1 certification failure, 2 usage/config error, \
                  3 numerical divergence."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and write its trace CSV.
    Solve(SolveArgs),
    /// Re-derive a trace from its metadata and certify it against its instance.
    Certify(CertifyArgs),
    /// Print extreme curvatures (mu, L) and the condition number.
    Spectrum(SpectrumArgs),
    /// Extract plot-ready columns from a trace CSV.
    Plotdata(PlotdataArgs),
    /// Run a full experiment from a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum StepIntent {
    /// Certify objective decay: auto step = 1/L.
    Objective,
    /// Certify the prox-subgradient norm too: auto step = 1/(2L), since the
    /// gradient envelope needs a step strictly below 1/L.
    Gradient,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file.
    #[arg(long, value_name = "PATH", conflicts_with = "paper")]
    instance: Option<PathBuf>,
    /// Use the built-in 500-dimensional ill-conditioned tridiagonal instance.
    #[arg(long)]
    paper: bool,
    /// Solver: ista, fista, or fista-phase.
    #[arg(long, value_name = "NAME")]
    method: String,
    /// Step size, or "auto" (resolved per --step-intent).
    #[arg(long, value_name = "REAL|auto", default_value = "auto")]
    step: String,
    /// What "auto" optimizes the step for.
    #[arg(long, value_enum, default_value_t = StepIntent::Objective)]
    step_intent: StepIntent,
    #[arg(long, value_name = "N", default_value_t = 10_000)]
    max_iters: usize,
    /// Stop once ||G_s||^2 drops to this value (0 disables).
    #[arg(long, value_name = "REAL", default_value_t = 0.0)]
    grad_tol: f64,
    /// Residual tolerance of the reference solve behind the printed gap.
    #[arg(long, value_name = "REAL", default_value_t = 1e-13)]
    reference_tol: f64,
    /// Output directory for the trace CSV (and instance.json with --paper).
    #[arg(long, value_name = "DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CertifyArgs {
    /// Trace CSV to certify.
    #[arg(long, value_name = "PATH")]
    trace: PathBuf,
    /// Instance JSON the trace was solved on.
    #[arg(long, value_name = "PATH", conflicts_with = "paper")]
    instance: Option<PathBuf>,
    /// Certify against the built-in tridiagonal instance.
    #[arg(long)]
    paper: bool,
    /// Where to write the certificate report JSON.
    #[arg(long, value_name = "PATH")]
    report: PathBuf,
    /// Reference residual tolerance (default: the trace's recorded value,
    /// else 1e-13).
    #[arg(long, value_name = "REAL")]
    reference_tol: Option<f64>,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Symmetric tridiagonal Toeplitz coefficients "n,diag,offdiag".
    #[arg(long, value_name = "N,DIAG,OFFDIAG", conflicts_with = "instance")]
    tridiagonal: Option<String>,
    /// Instance JSON file.
    #[arg(long, value_name = "PATH")]
    instance: Option<PathBuf>,
}

#[derive(Args)]
struct PlotdataArgs {
    /// Trace CSV to read.
    #[arg(long, value_name = "PATH")]
    trace: PathBuf,
    /// Series to extract: gs, obj, or lyapunov.
    #[arg(long, value_name = "NAME")]
    series: String,
    /// Emit log10(value) instead of value (nonpositive entries left empty).
    #[arg(long)]
    log10: bool,
    /// Output file.
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment config JSON.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Spectrum(args) => cmd_spectrum(args),
        Command::Plotdata(args) => cmd_plotdata(args),
        Command::Experiment(args) => cmd_experiment(args),
    }
}

fn load_source_instance(instance: &Option<PathBuf>, paper: bool, what: &str) -> Result<Instance> {
    match (instance, paper) {
        (Some(path), false) => load_instance(path),
        (None, true) => build_benchmark_instance(),
        (None, false) => Err(Error::Config(format!(
            "{what} needs an instance: pass --instance PATH or --paper"
        ))),
        (Some(_), true) => unreachable!("clap conflicts_with"),
    }
}

fn cmd_solve(args: SolveArgs) -> Result<u8> {
    let instance = load_source_instance(&args.instance, args.paper, "solve")?;
    let problem = &instance.problem;
    let method = Method::parse(&args.method)?;
    let lipschitz = problem.lipschitz();
    let s = if args.step == "auto" {
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::Config(format!(
                "--step auto needs 0 < L < inf, got L = {lipschitz}"
            )));
        }
        match args.step_intent {
            StepIntent::Objective => 1.0 / lipschitz,
            StepIntent::Gradient => 0.5 / lipschitz,
        }
    } else {
        args.step
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("--step must be a real or \"auto\", got '{}'", args.step)))?
    };
    let stop = StoppingRule::new(args.max_iters, args.grad_tol)?;
    let x0 = DVector::zeros(problem.dimension);
    let trace = run_solver(problem, method, &x0, s, &stop)?;
    if trace.step_warning {
        eprintln!(
            "warning: step {s} exceeds 1/L = {}; no convergence guarantee applies",
            1.0 / lipschitz
        );
    }
    let reference = reference_solution(problem, args.reference_tol)?;
    let final_rec = trace.final_record();
    let gap = problem.objective(final_rec.main_iterate())? - reference.phi;
    let dist0_sq = (&trace.records[0].y - &reference.x).norm_squared();
    let phi_gap0 = problem.objective(trace.records[0].main_iterate())? - reference.phi;
    std::fs::create_dir_all(&args.out)?;
    let trace_path = args.out.join(format!("trace-{}.csv", method.as_str()));
    save_trace_csv(
        &trace_path,
        &trace,
        &TraceExtras {
            reference_residual: Some(reference.residual),
            reference_tol: Some(args.reference_tol),
            dist0_sq: Some(dist0_sq),
            phi_gap0: Some(phi_gap0),
        },
    )?;
    if args.paper {
        save_instance(&args.out.join("instance.json"), &instance.file)?;
    }
    println!("instance: {} (n = {})", instance.name, problem.dimension);
    println!("method: {method}, step = {s:.16e}");
    println!("final k = {}", final_rec.k);
    println!("final ||G_s||^2 = {:.16e}", final_rec.gs_norm_sq);
    println!("objective gap vs reference = {gap:.16e}");
    println!("trace written to {}", trace_path.display());
    if trace.divergent {
        eprintln!("run diverged (non-finite iterates); trace holds the finite prefix");
        return Ok(EXIT_DIVERGENCE);
    }
    Ok(0)
}

/// Re-runs the solver described by a persisted trace's metadata and checks
/// the recorded `||G_s||^2` series matches bit for bit.
fn rebuild_trace(persisted: &PersistedTrace, instance: &Instance) -> Result<SolverTrace> {
    let problem = &instance.problem;
    if persisted.dimension != problem.dimension {
        return Err(Error::Mismatch(format!(
            "trace dimension {} vs instance dimension {}",
            persisted.dimension, problem.dimension
        )));
    }
    if persisted.mu != problem.mu() || persisted.lipschitz != problem.lipschitz() {
        return Err(Error::Mismatch(format!(
            "trace curvatures (mu={}, L={}) do not match the instance (mu={}, L={})",
            persisted.mu,
            persisted.lipschitz,
            problem.mu(),
            problem.lipschitz()
        )));
    }
    if let Some(lambda) = persisted.lambda {
        if lambda != instance.file.lambda {
            return Err(Error::Mismatch(format!(
                "trace lambda {} vs instance lambda {}",
                lambda, instance.file.lambda
            )));
        }
    }
    let x0 = match &persisted.x0 {
        StartPoint::Zeros => DVector::zeros(problem.dimension),
        StartPoint::File(path) => {
            let values: Vec<f64> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            if values.len() != problem.dimension {
                return Err(Error::Shape {
                    context: "trace x0 file",
                    expected: problem.dimension,
                    got: values.len(),
                });
            }
            DVector::from_vec(values)
        }
        StartPoint::Other => {
            return Err(Error::Mismatch(
                "trace metadata marks x0 as not re-derivable; cannot certify".into(),
            ))
        }
    };
    let wanted = persisted.rows.len();
    let stop = StoppingRule::new(wanted.saturating_sub(1).max(1), 0.0)?;
    let mut trace = run_solver(problem, persisted.method, &x0, persisted.step, &stop)?;
    trace.records.truncate(wanted);
    if trace.records.len() != wanted {
        return Err(Error::Mismatch(format!(
            "re-derived run stopped after {} records, trace file has {wanted}",
            trace.records.len()
        )));
    }
    for (rec, row) in trace.records.iter().zip(&persisted.rows) {
        if rec.gs_norm_sq.to_bits() != row.gs_norm_sq.to_bits() {
            return Err(Error::Mismatch(format!(
                "||G_s||^2 mismatch at k = {}: re-derived {:.16e}, trace file {:.16e}",
                row.k, rec.gs_norm_sq, row.gs_norm_sq
            )));
        }
    }
    Ok(trace)
}

fn cmd_certify(args: CertifyArgs) -> Result<u8> {
    let persisted = load_trace_csv(&args.trace)?;
    let instance = load_source_instance(&args.instance, args.paper, "certify")?;
    let mut trace = rebuild_trace(&persisted, &instance)?;
    let reference_tol = args
        .reference_tol
        .or(persisted.extras.reference_tol)
        .unwrap_or(1e-13);
    let reference: Reference = reference_solution(&instance.problem, reference_tol)?;
    let report = certify_solver_trace(&instance.problem, &mut trace, &reference)?;
    save_report_json(&args.report, &report)?;
    if let Some(reason) = &report.uncertifiable {
        println!("uncertifiable: {reason}");
        println!("report written to {}", args.report.display());
        return Ok(EXIT_CERT_FAILURE);
    }
    for check in &report.checks {
        println!(
            "{}: {} (tested {}, worst slack {:.3e} at index {})",
            check.name,
            if check.pass { "pass" } else { "FAIL" },
            check.tested,
            check.worst_slack,
            check.worst_index
        );
    }
    println!("report written to {}", args.report.display());
    if report.all_pass() {
        println!("certificate: all checks passed");
        Ok(0)
    } else {
        println!("certificate: FAILED");
        Ok(EXIT_CERT_FAILURE)
    }
}

fn fmt_sig6(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.5e}")
    } else if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v}")
    }
}

fn cmd_spectrum(args: SpectrumArgs) -> Result<u8> {
    let (mu, lipschitz) = match (&args.tridiagonal, &args.instance) {
        (Some(coeffs), None) => {
            let parts: Vec<&str> = coeffs.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::Config(format!(
                    "--tridiagonal expects \"n,diag,offdiag\", got '{coeffs}'"
                )));
            }
            let n: usize = parts[0]
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad n '{}'", parts[0])))?;
            let diag: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad diag '{}'", parts[1])))?;
            let offdiag: f64 = parts[2]
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad offdiag '{}'", parts[2])))?;
            tridiagonal_spectrum(n, diag, offdiag)?
        }
        (None, Some(path)) => {
            let instance = load_instance(path)?;
            match &instance.file.kind {
                OperatorKind::Tridiagonal { dim, diag, offdiag } => {
                    tridiagonal_spectrum(*dim, *diag, *offdiag)?
                }
                OperatorKind::Dense { .. } => dense_gram_spectrum(&instance.file.operator()?)?,
            }
        }
        _ => {
            return Err(Error::Config(
                "spectrum needs exactly one source: --tridiagonal or --instance".into(),
            ))
        }
    };
    println!("mu = {}", fmt_sig6(mu));
    println!("L = {}", fmt_sig6(lipschitz));
    println!("cond = {}", fmt_sig6(condition_number(mu, lipschitz)));
    Ok(0)
}

fn cmd_plotdata(args: PlotdataArgs) -> Result<u8> {
    let persisted = load_trace_csv(&args.trace)?;
    let series = TraceSeries::parse(&args.series)?;
    let (ks, values, envelope) = extract_series(&persisted, series)?;
    save_plot_csv(&args.out, &ks, &values, envelope.as_deref(), args.log10)?;
    println!(
        "wrote {} rows ({} series{}) to {}",
        ks.len(),
        args.series,
        if envelope.is_some() { " + envelope" } else { "" },
        args.out.display()
    );
    Ok(0)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<u8> {
    let config = ExperimentConfig::load(&args.config)?;
    let summary = run_experiment(&config)?;
    println!(
        "instance: {} (step = {:.16e}, reference residual = {:.3e})",
        summary.instance, summary.step, summary.reference.residual
    );
    for outcome in &summary.solvers {
        let to_threshold = match outcome.iterations_to_threshold {
            Some(k) => format!("{k}"),
            None => "not reached".into(),
        };
        println!(
            "{}: {} iterations ({}), final ||G_s||^2 = {:.3e}, ||G_s||^2 <= {:.1e} at k = {}, {}",
            outcome.method,
            outcome.iterations,
            outcome.terminated_by.as_str(),
            outcome.final_gs_norm_sq,
            summary.threshold,
            to_threshold,
            match (&outcome.uncertifiable, outcome.certified) {
                (Some(reason), _) => format!("uncertifiable ({reason})"),
                (None, true) => "certified".into(),
                (None, false) => "certificate FAILED".into(),
            }
        );
    }
    println!("outputs in {}", config.output_dir.display());
    if summary.solvers.iter().any(|o| o.divergent) {
        return Ok(EXIT_DIVERGENCE);
    }
    if summary.solvers.iter().any(|o| !o.certified) {
        return Ok(EXIT_CERT_FAILURE);
    }
    Ok(0)
}
