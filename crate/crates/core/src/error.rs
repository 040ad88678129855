use thiserror::Error;

/// Errors surfaced by case ingestion, model assembly, and the solve loops.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("schema error at `{key}`: {message}")]
    Schema { key: String, message: String },

    #[error("case validation failed:\n{0}")]
    InvalidCase(String),

    #[error("override conflict: {0}")]
    OverrideConflict(String),

    #[error("problem is infeasible ({context})")]
    Infeasible { context: String },

    #[error("problem is unbounded ({context})")]
    Unbounded { context: String },

    #[error("solver backend `{backend}` failed: {message}")]
    Backend { backend: String, message: String },

    #[error("unknown backend `{0}`")]
    UnknownBackend(String),

    #[error(
        "dual bound {bound:.6e} is tight at row {row} (value {value:.6e}); \
         increase beta_bound so the linearization bounds stay slack"
    )]
    DualBoundTight { row: String, bound: f64, value: f64 },

    #[error(
        "cut generation stalled: subproblem returned an already-known scenario \
         with relative gap {gap:.3e} > {tol:.3e} after {iterations} iterations"
    )]
    Stall {
        gap: f64,
        tol: f64,
        iterations: usize,
    },

    #[error("scenario support too large: {size} trajectories exceeds the {limit} guard")]
    SupportTooLarge { size: u128, limit: u128 },

    #[error("case fingerprint mismatch: solution was produced for {expected}, got {actual}")]
    FingerprintMismatch { expected: String, actual: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn schema(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            key: key.into(),
            message: message.into(),
        }
    }
}
