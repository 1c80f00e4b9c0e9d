use thiserror::Error;

/// Errors surfaced by construction, solving, certification, and persistence.
#[derive(Debug, Error)]
pub enum Error {
    /// Dimension disagreement between operands (matrix/vector/trace).
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A scalar or structural parameter outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A theorem hypothesis required by an envelope or check is violated
    /// (e.g. building a linear-rate envelope with a step beyond 1/L).
    #[error("theorem hypothesis violated: {0}")]
    Hypothesis(String),

    /// The requested quantity needs trace data that was not recorded
    /// (e.g. a phase-space Lyapunov series from a momentum-form trace).
    #[error("trace is missing required data: {0}")]
    MissingTraceData(String),

    /// Persisted artifacts disagree with each other or with the instance.
    #[error("inconsistent inputs: {0}")]
    Mismatch(String),

    /// Malformed persisted file (CSV/JSON).
    #[error("parse error: {0}")]
    Parse(String),

    /// Invalid experiment configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
