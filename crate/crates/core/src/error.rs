use std::path::PathBuf;

/// Errors raised by the library. Inconclusive certificates and censored
/// Monte Carlo estimates are results, not errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("delay {delay} is not an integer multiple of the grid step {step}")]
    NonIntegralGrid { delay: f64, step: f64 },

    #[error("time {s} lies outside the segment window [-{delay}, 0]")]
    OutsideWindow { s: f64, delay: f64 },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("truncated generator is reducible ({components} communicating classes)")]
    Reducible { components: usize },

    #[error("linear system is singular beyond tolerance")]
    Singular,

    #[error("unknown model family `{0}`")]
    UnknownModel(String),

    #[error("bernoulli switching needs dt * M < 0.5, got {0}")]
    StepTooCoarse(f64),

    #[error("nonzero gain on uncontrolled mode {0}")]
    GainOnUncontrolledMode(usize),

    #[error("missing derivative callback: {0}")]
    MissingDerivative(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
