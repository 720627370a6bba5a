use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("footprint length mismatch: {0} bits vs {1} bits")]
    FootprintMismatch(usize, usize),

    #[error("empty similarity row: document has no terms")]
    EmptySimilarities,

    #[error("empty query")]
    EmptyQuery,

    #[error("no token group resolvable for query term `{0}`")]
    MissingTerm(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("store mismatch: {0}")]
    StoreMismatch(String),

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("schema mismatch: {0}")]
    Schema(String),

    #[error("training diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// Short stable identifier used in machine-parsable CLI error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::DimensionMismatch { .. } => "dimension",
            Error::FootprintMismatch(..) => "footprint",
            Error::EmptySimilarities => "empty-similarities",
            Error::EmptyQuery => "empty-query",
            Error::MissingTerm(_) => "missing-term",
            Error::NotFound(_) => "not-found",
            Error::StoreMismatch(_) => "store-mismatch",
            Error::Format { .. } => "format",
            Error::Schema(_) => "schema",
            Error::Diverged { .. } => "diverged",
            Error::Eval(_) => "eval",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
