use std::io;

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("user {user} has rank below {required} (singular values {singular_values:?})")]
    RankDeficient {
        user: usize,
        required: usize,
        singular_values: Vec<f64>,
    },

    #[error("channel generation failed after {attempts} attempts for sample {index}")]
    Generation { index: u64, attempts: u32 },

    #[error("gram matrix is ill-conditioned (condition number {0:e})")]
    Conditioning(f64),

    #[error("zero target at position {0}")]
    ZeroTarget(usize),

    #[error("zero-variance target")]
    ZeroVarianceTarget,

    #[error("degenerate design matrix: {0}")]
    Degenerate(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u16, expected: u16 },

    #[error("bad magic bytes: expected {expected:?}")]
    Magic { expected: &'static str },

    #[error("checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("malformed data: {0}")]
    Format(String),

    #[error("model family mismatch: expected {expected}, found {found}")]
    ModelFamily {
        expected: &'static str,
        found: &'static str,
    },

    #[error("missing model: {0}")]
    MissingModel(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse failure class, used for process exit codes and C error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::MissingModel(_) => ErrorClass::Config,
            Error::Shape(_)
            | Error::Version { .. }
            | Error::Magic { .. }
            | Error::Checksum { .. }
            | Error::Format(_)
            | Error::ModelFamily { .. }
            | Error::Io(_) => ErrorClass::Data,
            Error::NonFinite(_)
            | Error::RankDeficient { .. }
            | Error::Generation { .. }
            | Error::Conditioning(_)
            | Error::ZeroTarget(_)
            | Error::ZeroVarianceTarget
            | Error::Degenerate(_)
            | Error::Diverged(_) => ErrorClass::Numeric,
            Error::Stage { source, .. } => source.class(),
        }
    }
}
