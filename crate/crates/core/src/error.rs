use std::fmt;
use std::path::PathBuf;

use crate::problem::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised by the evaluation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("manifest validation failed:\n{}", ViolationList(.0))]
    Validation(Vec<Violation>),

    /// Bad arguments to an estimator or formula (k out of range, shape mismatch).
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("configuration error: {0}")]
    Config(String),

    /// Data that violates a precondition, e.g. an uncalibrated manifest.
    #[error("data error: {0}")]
    Data(String),

    #[error("problem `{problem_id}` has {available} samples but k={k} was requested: insufficient samples")]
    InsufficientSamples {
        problem_id: String,
        available: usize,
        k: usize,
    },

    #[error("generator failed ({status}): {diagnostics}")]
    Generator { status: String, diagnostics: String },

    #[error("malformed record on line {line}: {message}")]
    Format { line: usize, message: String },

    /// The runner broke the wire protocol. Distinct from a candidate failing.
    #[error("runner protocol violation in job `{job_id}`: {message}")]
    RunnerProtocol { job_id: String, message: String },

    /// The worker could not be terminated.
    #[error("fatal harness error in job `{job_id}`: {message}")]
    Fatal { job_id: String, message: String },

    /// The reference solution misbehaved while calibrating a problem.
    #[error("reference solution for `{problem_id}`: {message}")]
    Reference { problem_id: String, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}

struct ViolationList<'a>(&'a [Violation]);

impl fmt::Display for ViolationList<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - [{}] {}", v.code, v.message)?;
        }
        Ok(())
    }
}
