use std::path::PathBuf;

use serde::{Deserialize, Serialize};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate vector: norm {norm:e} is at or below the zero threshold")]
    DegenerateVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("antipodal vectors: angle {angle} rad leaves the geodesic undefined")]
    AntipodalVectors { angle: f64 },

    #[error("weight at position {index} must be strictly positive, got {weight}")]
    NonPositiveWeight { index: usize, weight: f64 },

    #[error("vector contains non-finite components")]
    NonFiniteVector,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("bad payload: {0}")]
    BadPayload(String),

    #[error("provider unavailable: {0}")]
    ProviderUnavailable(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("malformed document: {0}")]
    MalformedDocument(String),

    #[error("cannot read {}: {source}", path.display())]
    FileUnreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("the index is empty")]
    EmptyIndex,

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("unknown template `{0}`")]
    UnknownTemplate(String),

    #[error("batch item {index} failed: {source}")]
    BatchItem {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse error classes shared by the HTTP service and the C ABI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, schemars::JsonSchema)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    NotFound,
    DimensionMismatch,
    DegenerateQuery,
    ProviderUnavailable,
    Internal,
}

impl ErrorCode {
    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::BadRequest => 400,
            ErrorCode::NotFound => 404,
            ErrorCode::DimensionMismatch => 400,
            ErrorCode::DegenerateQuery => 422,
            ErrorCode::ProviderUnavailable => 503,
            ErrorCode::Internal => 500,
        }
    }
}

impl Error {
    pub fn code(&self) -> ErrorCode {
        match self {
            Error::DegenerateVector { .. } | Error::AntipodalVectors { .. } => {
                ErrorCode::DegenerateQuery
            }
            Error::DimensionMismatch { .. } => ErrorCode::DimensionMismatch,
            Error::NotFound(_) | Error::EmptyIndex => ErrorCode::NotFound,
            Error::ProviderUnavailable(_) => ErrorCode::ProviderUnavailable,
            Error::NonPositiveWeight { .. }
            | Error::NonFiniteVector
            | Error::InvalidArgument(_)
            | Error::BadPayload(_)
            | Error::MalformedDocument(_)
            | Error::InvalidQuery(_)
            | Error::UnknownTemplate(_) => ErrorCode::BadRequest,
            Error::BatchItem { source, .. } => source.code(),
            Error::FileUnreadable { .. } | Error::Config(_) | Error::Io(_) => ErrorCode::Internal,
        }
    }
}
