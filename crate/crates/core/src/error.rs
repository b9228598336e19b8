use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("estimation failed for column `{column}`: {reason}")]
    Estimation { column: String, reason: String },

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("column `{column}`: value beyond the fitted GPD upper endpoint at rows {rows:?}")]
    BeyondEndpoint { column: String, rows: Vec<usize> },

    #[error(
        "region is not contained in the extreme region at level k={k}: boundary point {point:?} has ratio {ratio:.6}"
    )]
    Containment { point: Vec<f64>, ratio: f64, k: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("threshold window around {center:?} holds {count} points after maximal enlargement")]
    ThinWindow { center: Vec<f64>, count: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::FitFailure(_) | Error::Numerical(_) => 3,
            _ => 2,
        }
    }
}
