use std::io;

use thiserror::Error;

use crate::memory::{IdentityId, ItemKey};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("descriptor has dimension {found}, expected {expected}")]
    Dimension { expected: usize, found: usize },

    #[error("descriptor has zero norm and cannot be normalized")]
    ZeroVector,

    #[error("descriptor contains a non-finite component")]
    NonFinite,

    #[error("decay factor {eta} is outside the open unit interval")]
    Contraction { eta: f64 },

    #[error("memory item {0} is not stored")]
    UnknownItem(ItemKey),

    #[error("identity {0} has not been allocated")]
    UnallocatedIdentity(IdentityId),

    #[error("frame {got} is not after frame {last}")]
    Sequencing { last: u64, got: u64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("metric is undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Short machine-readable category, used by the CLI error record.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension { .. } | Error::Parse { .. } | Error::Schema(_) => "schema",
            Error::Config(_) => "config",
            Error::ZeroVector | Error::NonFinite => "descriptor",
            Error::Contraction { .. } => "contraction",
            Error::UnknownItem(_) | Error::UnallocatedIdentity(_) => "unknown_item",
            Error::Sequencing { .. } => "sequencing",
            Error::UndefinedMetric(_) => "undefined_metric",
            Error::Evaluation(_) => "evaluation",
            Error::Io(_) => "io",
        }
    }
}
