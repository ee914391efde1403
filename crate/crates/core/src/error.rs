use std::path::PathBuf;

use thiserror::Error;

/// Errors produced across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: parse error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Parse {
        path: PathBuf,
        line: Option<usize>,
        message: String,
    },

    #[error("invalid `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error("unsupported feature: {0}")]
    UnsupportedFeature(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("singular bus block in Kron reduction (pivot ratio estimate {condition_estimate:.3e})")]
    Singular { condition_estimate: f64 },

    #[error("integration failed at step {step} (t = {time:.6} s): Newton residual {residual:.3e} after {iterations} iterations")]
    Integration {
        step: usize,
        time: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("power flow did not converge: mismatch {mismatch:.3e} after {iterations} iterations")]
    PowerFlow { mismatch: f64, iterations: usize },

    #[error("solver did not succeed: {summary}")]
    Solver {
        status: crate::nlp::SolveStatus,
        summary: String,
    },

    #[error("mismatched inputs: {0}")]
    Mismatch(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage labels.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
