use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dataset counts differ from the expected table: {0}")]
    CountMismatch(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("backward called on a non-scalar tensor of shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("image {height}x{width} is not divisible by patch size {patch}; pad to {pad_h}x{pad_w}")]
    ImageShape {
        height: usize,
        width: usize,
        patch: usize,
        pad_h: usize,
        pad_w: usize,
    },

    #[error("image error: {0}")]
    Image(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("experiment `{name}` failed: {source}")]
    Experiment {
        name: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short stable identifier used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Record { .. } => "record",
            Error::CountMismatch(_) => "count_mismatch",
            Error::Shape { .. } => "shape",
            Error::Invalid(_) => "invalid",
            Error::NonScalarLoss(_) => "non_scalar_loss",
            Error::TapeConsumed => "tape_consumed",
            Error::NonFinite(_) => "non_finite",
            Error::ImageShape { .. } => "image_shape",
            Error::Image(_) => "image",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Experiment { source, .. } => source.kind(),
        }
    }
}
