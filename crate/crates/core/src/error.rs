use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A row of an input file violated the file schema or a record invariant.
    /// Rows are 1-based and count the header as row 1.
    #[error("{file} row {row}: {msg}")]
    Row { file: String, row: usize, msg: String },

    #[error("invalid data: {0}")]
    Data(String),

    #[error("empty intersection: {0}")]
    EmptyIntersection(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate target: total sum of squares is zero")]
    DegenerateTarget,

    #[error("singular system: {0}")]
    Singular(String),

    #[error("solver did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("non-finite activation in layer {layer}")]
    NonFinite { layer: String },

    #[error("serialization: {0}")]
    Serde(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn row(file: &str, row: usize, msg: impl Into<String>) -> Self {
        Error::Row {
            file: file.to_string(),
            row,
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the failure is numerical (singular systems, divergence, non-convergence)
    /// rather than a problem with the inputs.
    pub fn is_numerical(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_numerical();
        }
        matches!(
            self,
            Error::Singular(_)
                | Error::NotConverged { .. }
                | Error::Divergence { .. }
                | Error::NonFinite { .. }
        )
    }

    pub fn is_config(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_config(),
            other => matches!(other, Error::Config(_)),
        }
    }

    /// Wraps the error with the pipeline stage it came from.
    pub fn at(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
