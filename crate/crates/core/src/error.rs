use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: String, found: String },

    #[error("invalid interval ({lower}, {upper}]: lower bound must be strictly below upper bound")]
    InvalidInterval { lower: f64, upper: f64 },

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("predictor protocol error at line {line}: {message}")]
    Protocol { line: usize, message: String },

    #[error("predictor failure: {0}")]
    Predictor(String),

    #[error("fusion conflict at instance {instance}: candidate rules predict different classes")]
    FusionConflict { instance: usize },

    #[error("degenerate weights at instance {instance}: all source weights are zero")]
    DegenerateWeights { instance: usize },

    #[error("unsupported number of methods for the Nemenyi table: {0} (supported: 2..=20)")]
    UnsupportedK(usize),

    #[error("undefined statistic: {0}")]
    UndefinedStatistic(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn dimension(expected: impl ToString, found: impl ToString) -> Self {
        Error::Dimension {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
