//! Crate-wide error type.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Distribution parameters outside their admissible ranges.
    #[error("invalid ZOIB parameters: {0}")]
    InvalidParams(String),

    /// A function argument outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Quantile inversion did not reach tolerance; carries the last bracket.
    #[error(
        "beta quantile inversion failed to converge after {iterations} iterations \
         (last bracket [{lo}, {hi}])"
    )]
    QuantileConvergence { lo: f64, hi: f64, iterations: usize },

    /// A data value outside its admissible range, with its (0-based) row.
    #[error("row {row}: {message}")]
    OutOfRange { row: usize, message: String },

    /// A covariate column with no variation cannot be standardized.
    #[error("column '{column}' has zero variance and cannot be standardized")]
    ZeroVariance { column: String },

    /// A linear predictor evaluated to NaN/infinity.
    #[error("non-finite linear predictor in the {component} component")]
    NonFinitePredictor { component: String },

    /// Unpenalized logistic fit diverging (perfectly separated classes).
    #[error(
        "separation detected while fitting the {component} component (coefficient \
         magnitude exceeded {bound}); add a small ridge penalty to regularize"
    )]
    Separation { component: String, bound: f64 },

    /// Optimizer hit its iteration cap before reaching gradient tolerance.
    #[error(
        "fitting the {component} component did not converge after {iterations} \
         iterations (gradient sup-norm {grad_norm:.3e}, last objectives {trace_tail:?})"
    )]
    NonConvergence {
        component: String,
        iterations: usize,
        grad_norm: f64,
        trace_tail: Vec<f64>,
    },

    /// Too few interior observations to identify the beta component.
    #[error(
        "the {component} component needs at least {needed} interior observations \
         but only {got} are available"
    )]
    InsufficientInteriorData {
        component: String,
        needed: usize,
        got: usize,
    },

    /// A pilot regression with a singular design.
    #[error("degenerate pilot regression: {0}")]
    DegenerateRegression(String),

    /// Too many replicates (bootstrap refits or simulation repetitions) failed.
    #[error(
        "{failed} of {total} replicates failed ({percent:.1}%, above the 5% \
         budget); first failure: {first}"
    )]
    ReplicateFailures {
        failed: usize,
        total: usize,
        percent: f64,
        first: String,
    },

    /// Input-data ingestion problems (schema, parsing, validation).
    #[error("ingest error: {0}")]
    Ingest(String),

    /// Configuration file / flag problems.
    #[error("config error: {0}")]
    Config(String),

    /// Self-check failures (the `check` subcommand).
    #[error("{failed} of {total} invariant checks failed")]
    CheckFailed { failed: usize, total: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
