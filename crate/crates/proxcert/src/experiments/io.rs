//! On-disk formats: trace CSV, certificate report JSON, plot-data CSV.
//!
//! Trace CSV layout: `#`-prefixed `key=value` metadata lines, one header
//! line, then one row per recorded iterate. All floats are written with 17
//! significant digits (`{:.16e}`) so save/load round-trips are exact; empty
//! fields encode absent optional values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::certify::CertificateReport;
use crate::solvers::{Method, SolverTrace, StartPoint, Termination};
use crate::{Error, Result};

/// Column header of the trace CSV, matched exactly on load.
pub const TRACE_HEADER: &str = "k,gs_norm_sq,phi_x_gap,phi_y_gap,lyapunov,envelope_obj,envelope_grad";

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(v) if v.is_finite() => fmt_f64(v),
        _ => String::new(),
    }
}

/// Optional context recorded alongside a trace (filled when the trace was
/// certified against a reference).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TraceExtras {
    pub reference_residual: Option<f64>,
    pub reference_tol: Option<f64>,
    pub dist0_sq: Option<f64>,
    pub phi_gap0: Option<f64>,
}

/// Writes a trace to CSV. Deterministic: identical traces produce byte-
/// identical files.
pub fn save_trace_csv(path: &Path, trace: &SolverTrace, extras: &TraceExtras) -> Result<()> {
    let mut out = String::new();
    let meta = &trace.meta;
    let _ = writeln!(out, "# method={}", trace.method.as_str());
    let _ = writeln!(out, "# dimension={}", meta.dimension);
    let _ = writeln!(out, "# step={}", fmt_f64(meta.step));
    let _ = writeln!(out, "# mu={}", fmt_f64(meta.mu));
    let _ = writeln!(out, "# lipschitz={}", fmt_f64(meta.lipschitz));
    if let Some(lambda) = meta.lambda {
        let _ = writeln!(out, "# lambda={}", fmt_f64(lambda));
    }
    let x0 = match &meta.x0 {
        StartPoint::Zeros => "zeros".to_string(),
        StartPoint::File(p) => format!("file:{p}"),
        StartPoint::Other => "other".to_string(),
    };
    let _ = writeln!(out, "# x0={x0}");
    let _ = writeln!(out, "# terminated_by={}", trace.terminated_by.as_str());
    let _ = writeln!(out, "# divergent={}", trace.divergent);
    let _ = writeln!(out, "# step_warning={}", trace.step_warning);
    let _ = writeln!(out, "# mu_zero_momentum={}", trace.mu_zero_momentum);
    if let Some(v) = extras.reference_residual {
        let _ = writeln!(out, "# reference_residual={}", fmt_f64(v));
    }
    if let Some(v) = extras.reference_tol {
        let _ = writeln!(out, "# reference_tol={}", fmt_f64(v));
    }
    if let Some(v) = extras.dist0_sq {
        let _ = writeln!(out, "# dist0_sq={}", fmt_f64(v));
    }
    if let Some(v) = extras.phi_gap0 {
        let _ = writeln!(out, "# phi_gap0={}", fmt_f64(v));
    }
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.k,
            fmt_f64(r.gs_norm_sq),
            fmt_opt(r.objective_gap_x),
            fmt_opt(r.objective_gap_y),
            fmt_opt(r.lyapunov),
            fmt_opt(r.envelope_obj),
            fmt_opt(r.envelope_grad),
        );
    }
    fs::write(path, out)?;
    Ok(())
}

/// One loaded trace row (scalar columns only; iterate vectors are not
/// persisted).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub gs_norm_sq: f64,
    pub phi_x_gap: Option<f64>,
    pub phi_y_gap: Option<f64>,
    pub lyapunov: Option<f64>,
    pub envelope_obj: Option<f64>,
    pub envelope_grad: Option<f64>,
}

/// A trace as loaded from CSV: run metadata plus scalar per-iterate rows.
/// The run is re-derivable from the metadata when `x0` is `zeros` or a file.
#[derive(Clone, Debug, PartialEq)]
pub struct PersistedTrace {
    pub method: Method,
    pub dimension: usize,
    pub step: f64,
    pub mu: f64,
    pub lipschitz: f64,
    pub lambda: Option<f64>,
    pub x0: StartPoint,
    pub terminated_by: Termination,
    pub divergent: bool,
    pub step_warning: bool,
    pub mu_zero_momentum: bool,
    pub extras: TraceExtras,
    pub rows: Vec<TraceRow>,
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad float for {key}: '{v}'")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Parse(format!("bad bool for {key}: '{v}'"))),
    }
}

fn parse_opt_field(key: &str, v: &str) -> Result<Option<f64>> {
    if v.is_empty() {
        Ok(None)
    } else {
        parse_f64(key, v).map(Some)
    }
}

/// Loads a trace CSV written by [`save_trace_csv`]. Malformed or truncated
/// content is a parse error, never silently accepted.
pub fn load_trace_csv(path: &Path) -> Result<PersistedTrace> {
    let text = fs::read_to_string(path)?;
    let mut meta = std::collections::BTreeMap::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.peek() {
        let Some(rest) = line.strip_prefix("# ") else {
            break;
        };
        let (key, value) = rest
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad metadata line: '{line}'")))?;
        meta.insert(key.to_string(), value.to_string());
        lines.next();
    }
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("trace file has no header line".into()))?;
    if header != TRACE_HEADER {
        return Err(Error::Parse(format!(
            "unexpected trace header '{header}' (expected '{TRACE_HEADER}')"
        )));
    }
    let get = |key: &str| -> Result<&String> {
        meta.get(key)
            .ok_or_else(|| Error::Parse(format!("missing metadata key '{key}'")))
    };
    let x0 = {
        let raw = get("x0")?;
        match raw.as_str() {
            "zeros" => StartPoint::Zeros,
            "other" => StartPoint::Other,
            other => match other.strip_prefix("file:") {
                Some(p) => StartPoint::File(p.to_string()),
                None => return Err(Error::Parse(format!("bad x0 tag '{other}'"))),
            },
        }
    };
    let mut rows = Vec::new();
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!(
                "trace row has {} fields, expected 7: '{line}'",
                fields.len()
            )));
        }
        let k: usize = fields[0]
            .parse()
            .map_err(|_| Error::Parse(format!("bad row index '{}'", fields[0])))?;
        if k != rows.len() {
            return Err(Error::Parse(format!(
                "non-contiguous row index {k} at position {}",
                rows.len()
            )));
        }
        rows.push(TraceRow {
            k,
            gs_norm_sq: parse_f64("gs_norm_sq", fields[1])?,
            phi_x_gap: parse_opt_field("phi_x_gap", fields[2])?,
            phi_y_gap: parse_opt_field("phi_y_gap", fields[3])?,
            lyapunov: parse_opt_field("lyapunov", fields[4])?,
            envelope_obj: parse_opt_field("envelope_obj", fields[5])?,
            envelope_grad: parse_opt_field("envelope_grad", fields[6])?,
        });
    }
    if rows.is_empty() {
        return Err(Error::Parse("trace file has no rows".into()));
    }
    Ok(PersistedTrace {
        method: Method::parse(get("method")?)?,
        dimension: get("dimension")?
            .parse()
            .map_err(|_| Error::Parse("bad dimension".into()))?,
        step: parse_f64("step", get("step")?)?,
        mu: parse_f64("mu", get("mu")?)?,
        lipschitz: parse_f64("lipschitz", get("lipschitz")?)?,
        lambda: meta.get("lambda").map(|v| parse_f64("lambda", v)).transpose()?,
        x0,
        terminated_by: Termination::parse(get("terminated_by")?)?,
        divergent: parse_bool("divergent", get("divergent")?)?,
        step_warning: parse_bool("step_warning", get("step_warning")?)?,
        mu_zero_momentum: parse_bool("mu_zero_momentum", get("mu_zero_momentum")?)?,
        extras: TraceExtras {
            reference_residual: meta
                .get("reference_residual")
                .map(|v| parse_f64("reference_residual", v))
                .transpose()?,
            reference_tol: meta
                .get("reference_tol")
                .map(|v| parse_f64("reference_tol", v))
                .transpose()?,
            dist0_sq: meta.get("dist0_sq").map(|v| parse_f64("dist0_sq", v)).transpose()?,
            phi_gap0: meta.get("phi_gap0").map(|v| parse_f64("phi_gap0", v)).transpose()?,
        },
        rows,
    })
}

/// Series extractable from a persisted trace for plotting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TraceSeries {
    /// `||G_s(y_k)||^2`, always present.
    Gs,
    /// Objective gap at the main iterate; present after certification.
    Obj,
    /// Lyapunov value; present after certification (method-dependent).
    Lyapunov,
}

impl TraceSeries {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gs" => Ok(TraceSeries::Gs),
            "obj" => Ok(TraceSeries::Obj),
            "lyapunov" => Ok(TraceSeries::Lyapunov),
            other => Err(Error::InvalidParameter(format!(
                "unknown series '{other}' (expected gs, obj, or lyapunov)"
            ))),
        }
    }
}

/// Columns extracted for plotting: iteration indices, values, and the
/// matching envelope when the trace carries one.
pub type SeriesColumns = (Vec<usize>, Vec<f64>, Option<Vec<f64>>);

/// Pulls `(k, value, optional envelope)` columns for a series out of a
/// loaded trace. A series missing from any row is absent as a whole.
pub fn extract_series(trace: &PersistedTrace, series: TraceSeries) -> Result<SeriesColumns> {
    let ks: Vec<usize> = trace.rows.iter().map(|r| r.k).collect();
    let all = |f: fn(&TraceRow) -> Option<f64>| -> Option<Vec<f64>> {
        trace.rows.iter().map(f).collect()
    };
    let missing = |name: &str| {
        Error::MissingTraceData(format!(
            "series '{name}' is not present in this trace (certify it first)"
        ))
    };
    match series {
        TraceSeries::Gs => {
            let values = trace.rows.iter().map(|r| r.gs_norm_sq).collect();
            Ok((ks, values, all(|r| r.envelope_grad)))
        }
        TraceSeries::Obj => {
            let values = all(|r| r.phi_x_gap).ok_or_else(|| missing("obj"))?;
            Ok((ks, values, all(|r| r.envelope_obj)))
        }
        TraceSeries::Lyapunov => {
            let values = all(|r| r.lyapunov).ok_or_else(|| missing("lyapunov"))?;
            Ok((ks, values, None))
        }
    }
}

/// Renders a certificate report as JSON: a `checks` object keyed by check
/// name, the tolerance policy, the reference residual, and the overall
/// verdict.
pub fn report_to_json(report: &CertificateReport) -> serde_json::Value {
    let mut checks = serde_json::Map::new();
    for c in &report.checks {
        checks.insert(
            c.name.clone(),
            serde_json::json!({
                "tested": c.tested,
                "worst_slack": c.worst_slack,
                "worst_index": c.worst_index,
                "pass": c.pass,
            }),
        );
    }
    serde_json::json!({
        "checks": checks,
        "tolerance_policy": report.tolerance_policy,
        "reference_residual": report.reference_residual,
        "uncertifiable": report.uncertifiable,
        "all_pass": report.all_pass(),
    })
}

pub fn save_report_json(path: &Path, report: &CertificateReport) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&report_to_json(report))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes plot-ready columns `k,value[,envelope]`. With `log10` the values
/// are base-10 logs; nonpositive or non-finite entries become empty fields
/// (plotters skip them), never textual infinities.
pub fn save_plot_csv(
    path: &Path,
    ks: &[usize],
    values: &[f64],
    envelope: Option<&[f64]>,
    log10: bool,
) -> Result<()> {
    if values.len() != ks.len() || envelope.is_some_and(|e| e.len() != ks.len()) {
        return Err(Error::InvalidParameter(
            "plot columns must have equal lengths".into(),
        ));
    }
    let cell = |v: f64| -> String {
        let v = if log10 {
            if v > 0.0 && v.is_finite() {
                v.log10()
            } else {
                f64::NAN
            }
        } else {
            v
        };
        fmt_opt(v.is_finite().then_some(v))
    };
    let mut out = String::new();
    out.push_str(if envelope.is_some() {
        "k,value,envelope\n"
    } else {
        "k,value\n"
    });
    for (i, &k) in ks.iter().enumerate() {
        match envelope {
            Some(env) => {
                let _ = writeln!(out, "{},{},{}", k, cell(values[i]), cell(env[i]));
            }
            None => {
                let _ = writeln!(out, "{},{}", k, cell(values[i]));
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}
