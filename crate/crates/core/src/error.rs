use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("{what} did not converge within {iterations} iterations")]
    NotConverged { what: &'static str, iterations: usize },

    /// MC4 power iteration ran out of iterations; carries the last iterate.
    #[error("MC4 power iteration did not converge within {iterations} iterations (last L1 change {last_change:e})")]
    Mc4NotConverged {
        iterations: usize,
        last_change: f64,
        last_iterate: Vec<f64>,
    },

    /// The request is valid but beyond what the chosen exact method handles.
    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("truncation region has numerically zero probability: {0}")]
    OrthantUnreachable(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("period {period}, method {method}: {source}")]
    Period {
        period: usize,
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
