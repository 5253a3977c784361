use std::path::PathBuf;

use crate::measurement::ProjectorSpec;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("basis code {code:#b} is not a member of the S^z = {total_sz} sector")]
    NotInSector { code: u64, total_sz: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("Lanczos did not converge after {iterations} iterations (best residual {best_residual:.3e})")]
    Convergence { iterations: usize, best_residual: f64 },

    #[error("Chebyshev series not converged at order cap {order} (last coefficient {achieved:.3e})")]
    Precision { order: usize, achieved: f64 },

    #[error("outcome {projector} has probability {probability:.3e}, below the 1e-14 floor")]
    ImpossibleOutcome {
        projector: ProjectorSpec,
        probability: f64,
    },

    #[error("refusing dense construction for N = {n_sites} (limit {limit})")]
    ResourceGuard { n_sites: usize, limit: usize },

    #[error("invalid scenario:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("event {index} at t = {time}: {source}")]
    AtEvent {
        index: usize,
        time: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// The innermost error, looking through event annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtEvent { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::Validation(_) | Error::Domain(_) | Error::ResourceGuard { .. } => 2,
            Error::Convergence { .. } | Error::Precision { .. } => 3,
            Error::ImpossibleOutcome { .. } => 4,
            _ => 1,
        }
    }
}
