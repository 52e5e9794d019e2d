//! Command-line and HTTP front ends over `devinv_core`.
//!
//! Both front ends share [`app::App`] for the work and [`render`] for
//! machine-readable output, so a CSV produced by `devinv search --format csv`
//! is byte-for-byte the body of `POST /search?format=csv`.

pub mod app;
pub mod cli;
pub mod config;
pub mod render;
pub mod server;

use devinv_core::embedding_index::IndexError;
use devinv_core::{CorpusError, EvaluationError, ExtractionError, GatewayError, RagError};

pub use app::App;
pub use config::AppConfig;

/// Failure classes shared by the CLI (exit codes) and service (statuses).
#[derive(Debug, thiserror::Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    NotFound(String),
    #[error("provider: {0}")]
    Upstream(String),
    #[error("{0}")]
    Internal(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 2,
            _ => 1,
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            AppError::Usage(_) | AppError::BadRequest(_) => 400,
            AppError::NotFound(_) => 404,
            AppError::Upstream(_) => 502,
            AppError::Config(_) | AppError::Internal(_) => 500,
        }
    }
}

impl From<GatewayError> for AppError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::EmptyInput => AppError::BadRequest(e.to_string()),
            GatewayError::InvalidConfig { .. } => AppError::Config(e.to_string()),
            GatewayError::Unsupported { .. } => AppError::Usage(e.to_string()),
            GatewayError::Io(_) => AppError::Internal(e.to_string()),
            _ => AppError::Upstream(e.to_string()),
        }
    }
}

impl From<IndexError> for AppError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Gateway(g) => g.into(),
            IndexError::InvalidQuery(_) | IndexError::ZeroVector => AppError::BadRequest(e.to_string()),
            _ => AppError::Internal(e.to_string()),
        }
    }
}

impl From<ExtractionError> for AppError {
    fn from(e: ExtractionError) -> Self {
        match e {
            ExtractionError::Gateway(g) => g.into(),
            ExtractionError::UnknownTask(_) | ExtractionError::ContextTooLarge { .. } => {
                AppError::BadRequest(e.to_string())
            }
            _ => AppError::Internal(e.to_string()),
        }
    }
}

impl From<RagError> for AppError {
    fn from(e: RagError) -> Self {
        match e {
            RagError::Index(i) => i.into(),
            RagError::Gateway(g) => g.into(),
            RagError::EmptyQuestion | RagError::InvalidBudget(_) => AppError::BadRequest(e.to_string()),
            RagError::UnknownRecordId(_) => AppError::NotFound(e.to_string()),
            RagError::Io(_) => AppError::Internal(e.to_string()),
        }
    }
}

impl From<EvaluationError> for AppError {
    fn from(e: EvaluationError) -> Self {
        match e {
            EvaluationError::UnknownRecord(_) => AppError::NotFound(e.to_string()),
            EvaluationError::BadOverride { .. } => AppError::Config(e.to_string()),
            _ => AppError::Internal(e.to_string()),
        }
    }
}

impl From<CorpusError> for AppError {
    fn from(e: CorpusError) -> Self {
        AppError::Internal(e.to_string())
    }
}
