use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("symbol {symbol} is not in the alphabet of {grammar}")]
    InvalidSymbol { symbol: String, grammar: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("no member of {grammar} has a length in [{min}, {max}]")]
    NoFeasibleLength {
        grammar: String,
        min: usize,
        max: usize,
    },

    #[error("rejection budget of {attempts} attempts exceeded: {what}")]
    RejectionBudgetExceeded { attempts: usize, what: String },

    #[error("no structure-preserving perturbation exists for a word of length {len}")]
    NoValidPerturbation { len: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty batch")]
    EmptyBatch,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
