//! Error type shared across the pipeline.

use thiserror::Error;

/// Errors produced by pipeline operations.
#[derive(Debug, Error)]
pub enum Error {
    /// PLY syntax or content problem, with the 1-based line it was found on.
    #[error("PLY parse error at line {line}: {msg}")]
    PlyParse { line: usize, msg: String },

    /// Underlying I/O failure, with the path for context.
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// An operation was called with an argument outside its domain.
    #[error("invalid argument {name}: {msg}")]
    InvalidArgument { name: &'static str, msg: String },

    /// An operation that needs data received none.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Geometry too degenerate to produce a meaningful result.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// No ground points fell inside an obstacle's scaled box footprint.
    #[error("empty surface patch for obstacle {obstacle}")]
    EmptyPatch { obstacle: usize },

    /// A rock placement fell outside the terrain extent.
    #[error("placement ({x:.3}, {y:.3}) outside terrain extent")]
    OutOfExtent { x: f64, y: f64 },

    /// Model/dataset file content did not match the expected schema.
    #[error("schema error in {path}: {msg}")]
    Schema { path: String, msg: String },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// True for errors caused by unreadable or malformed inputs, as opposed
    /// to valid inputs that lead to degenerate computations.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::PlyParse { .. }
                | Error::Io { .. }
                | Error::InvalidArgument { .. }
                | Error::Schema { .. }
                | Error::EmptyInput(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
