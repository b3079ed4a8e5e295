use std::io;
use std::path::Path;

use thiserror::Error;

/// Crate-wide error type. Variants map onto the CLI exit-code categories.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or layer shapes do not line up.
    #[error("invalid shape: {0}")]
    Shape(String),

    /// A documented precondition was violated (e.g. m > extent).
    #[error("constraint violation: {0}")]
    Constraint(String),

    /// Bad run configuration (unknown key, unparsable value, missing field).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent on-disk data (frames, manifests, dumps).
    #[error("data error: {0}")]
    Data(String),

    /// Numeric failure during training (NaN/inf loss).
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl Error {
    /// Wrap an io error with the path it happened on.
    pub fn io_at(path: &Path, err: io::Error) -> Error {
        Error::Io(io::Error::new(
            err.kind(),
            format!("{}: {}", path.display(), err),
        ))
    }

    /// Exit-code category for the CLI: config 2, io 3, numeric 4, data 5.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) => 3,
            Error::Numeric(_) => 4,
            Error::Data(_) | Error::Shape(_) | Error::Constraint(_) => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
