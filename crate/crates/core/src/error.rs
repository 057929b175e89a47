use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("index {index} out of range 1..={dim}")]
    IndexOutOfRange { index: usize, dim: usize },

    #[error("{what} did not converge (residual {residual:.3e})")]
    NotConverged { what: &'static str, residual: f64 },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("maximum attained at the end of the sampled range (lambda = {lambda})")]
    RangeTooSmall { lambda: f64 },

    #[error("transversality fails: slope {slope:.3e} at lambda = {lambda}")]
    Transversality { lambda: f64, slope: f64 },

    #[error("Newton iteration diverged after {} iterations (last residual {:.3e})", .history.len(), .history.last().copied().unwrap_or(f64::NAN))]
    Divergence {
        history: Vec<f64>,
        last_u: Vec<f64>,
        last_lambda: f64,
        last_mu: f64,
    },

    #[error("singular linear system: {0}")]
    Singular(String),

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
