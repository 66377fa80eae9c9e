use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("write error: {0}")]
    Write(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("embedding dimension mismatch: expected {expected}, found {found} ({context})")]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: String,
    },
    #[error("no embedding for {} label(s): {}", .0.len(), .0.join(", "))]
    MissingLabels(Vec<String>),
    #[error("empty label")]
    EmptyLabel,
    #[error("zero-norm embedding vector")]
    ZeroNorm,
    #[error("domain guard violated: {0}")]
    Domain(String),
    #[error("degenerate edit path (no operations): identical labels must be filtered before scoring")]
    DegeneratePath,
    #[error("unknown label id {0}")]
    UnknownLabel(usize),
    #[error("column `{0}` not found in header")]
    MissingColumn(String),
    #[error("dataset has no rows")]
    EmptyDataset,
    #[error("row {row}: {message}")]
    Ingestion { row: usize, message: String },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
