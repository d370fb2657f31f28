use thiserror::Error;

use crate::network::EdlnNetwork;

pub type Result<T> = std::result::Result<T, EdlnError>;

#[derive(Debug, Error)]
pub enum EdlnError {
    #[error("shape mismatch at {location}: expected {expected}, found {found}")]
    Shape {
        location: String,
        expected: String,
        found: String,
    },

    #[error("layer index {index} out of range 0..={depth}")]
    LayerOutOfRange { index: usize, depth: usize },

    #[error("matrix is singular or ill-conditioned: {0}")]
    NotInvertible(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown view tag `{0}`")]
    UnknownTag(String),

    #[error("width {width} is smaller than rank(V*) = {rank}")]
    InsufficientWidth { width: usize, rank: usize },

    #[error("training diverged at step {step} (loss = {loss})")]
    Diverged {
        step: usize,
        loss: f64,
        last_finite: Box<EdlnNetwork>,
    },

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("degenerate representation: {0}")]
    Degenerate(String),

    #[error("failed to sample a well-conditioned transform after {0} attempts")]
    Resample(usize),

    #[error("scenario `{scenario}`: {source}")]
    Scenario {
        scenario: String,
        #[source]
        source: Box<EdlnError>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl EdlnError {
    pub fn shape(location: impl Into<String>, expected: impl ToString, found: impl ToString) -> Self {
        EdlnError::Shape {
            location: location.into(),
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}
