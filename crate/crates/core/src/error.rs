use std::path::PathBuf;

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid correlation {0}: must lie in [-1, 1]")]
    InvalidCorrelation(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "calibration failed for alpha={alpha}, rho={rho}: size {size_low} at c={bracket_low} \
         and {size_high} at c={bracket_high} do not straddle alpha"
    )]
    Calibration {
        alpha: f64,
        rho: f64,
        bracket_low: f64,
        bracket_high: f64,
        size_low: f64,
        size_high: f64,
    },

    #[error("degenerate cone: spanning vectors are (nearly) collinear, det = {det:e}")]
    DegenerateCone { det: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("too few replicates: got {got}, need at least {need}")]
    TooFewReplicates { got: usize, need: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
