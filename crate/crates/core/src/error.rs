use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent sizes or out-of-range arguments.
    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("parse error in {file} at line {line}: {message}")]
    Parse { file: String, line: usize, message: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    /// The damped Gauss-Newton loop could not make progress on a finite energy.
    #[error("optimization failed in frame {frame}: {message}")]
    OptimizationFailure { frame: usize, message: String, trace: Vec<f64> },

    #[error("training failed after {iterations} iterations: {message}")]
    TrainingFailure {
        iterations: usize,
        message: String,
        trace: Vec<f64>,
    },

    #[error("no texture available for triangle {0}")]
    NoTexture(usize),

    #[error("archive format error: {0}")]
    Format(String),

    #[error("unsupported archive version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("checksum mismatch in section {section}")]
    Checksum { section: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error on {path} ({context}): {source}")]
    Io {
        path: PathBuf,
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            context: context.into(),
            source,
        }
    }

    /// Wraps an error with the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
