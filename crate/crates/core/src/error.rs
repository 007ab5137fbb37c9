use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A record could not be decoded; the message names the offending field.
    #[error("parse error: {0}")]
    Parse(String),

    #[error("ordering error in graph {graph}: seq {got} follows {prev}")]
    Ordering { graph: String, prev: u64, got: u64 },

    #[error("partial-order violation: vertex {vertex} received an in-edge after emitting an out-edge")]
    PartialOrder { vertex: String },

    #[error("histogram is empty")]
    EmptyHistogram,

    #[error("histogram is not normalized (sum = {0})")]
    NotNormalized(f64),

    #[error("incompatible sketches: {0}")]
    SketchMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("configuration mismatch: {0}")]
    ConfigMismatch(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
