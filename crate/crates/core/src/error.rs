use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the support or parameter space.
    #[error("domain error: {argument} = {value} ({reason})")]
    Domain {
        argument: String,
        value: f64,
        reason: String,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Non-finite quantity produced while computing scores or weights.
    #[error("fitting error at row {row}: {message}")]
    Fitting { row: usize, message: String },

    #[error("global deviance diverged after {} outer iterations (trace: {trace:?})", trace.len())]
    Divergence { trace: Vec<f64> },

    #[error("design matrix is rank deficient; collinear columns: {}", columns.join(", "))]
    Rank { columns: Vec<String> },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at column {column}: {message}\n  {text}\n  {caret}")]
    Parse {
        message: String,
        column: usize,
        text: String,
        caret: String,
    },

    #[error("did not converge after {iterations} iterations")]
    Convergence { iterations: usize },

    #[error("models are not nested: degrees of freedom difference {0} is not positive")]
    Nesting(f64),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("observation {row} has leverage {leverage} too close to 1")]
    Leverage { row: usize, leverage: f64 },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("spline on non-continuous variable '{0}'")]
    NonContinuousSpline(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(argument: &str, value: f64, reason: impl Into<String>) -> Self {
        Error::Domain {
            argument: argument.to_string(),
            value,
            reason: reason.into(),
        }
    }
}
