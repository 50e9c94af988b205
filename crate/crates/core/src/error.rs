use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("row '{row}' has zero pooled variance")]
    ZeroVariance { row: String },

    #[error("{what}: need at least {needed}, got {got}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error(
        "empirical null fit did not converge after {iterations} iterations \
         (last iterate delta0={delta0}, sigma0={sigma0}, gradient norm={grad_norm:e})"
    )]
    NullFitNotConverged {
        iterations: usize,
        delta0: f64,
        sigma0: f64,
        grad_norm: f64,
    },

    #[error("IRLS failed after {} iterations; deviance trace {trace:?}", trace.len())]
    IrlsDiverged { trace: Vec<f64> },

    #[error("{what} did not converge within {iterations} iterations")]
    NotConverged {
        what: &'static str,
        iterations: usize,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Short machine-readable tag for the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::NonFinite(_) => "non_finite",
            Error::ZeroVariance { .. } => "zero_variance",
            Error::TooFew { .. } => "too_few",
            Error::Degenerate(_) => "degenerate",
            Error::NullFitNotConverged { .. } => "null_fit_not_converged",
            Error::IrlsDiverged { .. } => "irls_diverged",
            Error::NotConverged { .. } => "not_converged",
            Error::Parse { .. } => "parse",
            Error::Io(_) => "io",
        }
    }
}
