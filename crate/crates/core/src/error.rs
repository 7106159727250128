use std::path::PathBuf;

use thiserror::Error;

use crate::geoalign::AlignError;
use crate::modelio::ModelError;
use crate::quantize::QuantizeError;
use crate::textscore::BleuError;
use crate::verify::VerifyError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A line that is not valid JSON or lacks/mistypes a field.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A record that parsed but violates an invariant of its type.
    #[error("line {line}: invariant violated: {message}")]
    Invariant { line: usize, message: String },

    /// Caller misuse: unknown corpus kind, malformed endpoint spec, bad flag value.
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Data(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Quantize(#[from] QuantizeError),

    #[error(transparent)]
    Align(#[from] AlignError),

    #[error(transparent)]
    Bleu(#[from] BleuError),

    #[error(transparent)]
    Model(#[from] ModelError),

    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for errors the command line should report with the usage exit code.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Usage(_))
    }
}
