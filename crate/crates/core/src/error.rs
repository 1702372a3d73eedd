//! Crate-wide error type.

/// Unified error for every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{what} is ill-conditioned (condition estimate {cond:.3e})")]
    IllConditioned { what: &'static str, cond: f64 },

    #[error("kernel regression matrix is degenerate: all singular values fall below the pseudoinverse cutoff")]
    DegenerateKernelMatrix,

    #[error("snapshot matrix is identically zero")]
    ZeroSnapshotMatrix,

    #[error("trajectory diverged: non-finite state at t = {time:.6e}")]
    Diverged { time: f64 },

    #[error("adaptive integrator failed: {0}")]
    SolverFailure(String),

    #[error("training diverged: non-finite loss at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("parameter instance {index} (mu = [{mu}]): {source}")]
    Instance {
        index: usize,
        mu: String,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed data: {0}")]
    DataFormat(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps an error with the index and value of the parameter instance it
    /// came from.
    pub fn for_instance(index: usize, mu: &[f64], source: Error) -> Error {
        let mu = mu
            .iter()
            .map(|v| format!("{v}"))
            .collect::<Vec<_>>()
            .join(", ");
        Error::Instance {
            index,
            mu,
            source: Box::new(source),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
