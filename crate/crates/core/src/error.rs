use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("prediction budget exhausted ({used}/{limit} used, {requested} requested)")]
    BudgetExhausted {
        used: u64,
        limit: u64,
        requested: u64,
    },

    #[error("SUT transport error: {0}")]
    Transport(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("trained classifier too weak: holdout accuracy {accuracy:.4} < {threshold}")]
    TrainingQuality { accuracy: f64, threshold: f64 },

    #[error("no seed of class {class} accepted after {attempts} attempts")]
    SeedAcquisition { class: usize, attempts: usize },

    #[error("malformed data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
