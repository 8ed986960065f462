//! CLI error convention: every failure maps onto one of three kinds and is
//! printed as a single machine-parsable line `error: <Kind>: <detail>` on
//! stderr, with exit code 1.

use qoeseq_core::artifact::ArtifactError;
use qoeseq_core::baselines::BaselineError;
use qoeseq_core::eval::EvalError;
use qoeseq_core::hmm::HmmError;
use qoeseq_core::ingest::IngestError;
use qoeseq_core::vq::VqError;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A parameter, flag, or config value outside the range its consumer
    /// accepts, or an unusable combination of them.
    ConfigInvalid,
    /// An input path that does not exist or cannot be opened.
    FileMissing,
    /// A file that exists but violates its documented format, version, or
    /// cross-artifact consistency (for example a model whose alphabet does
    /// not match the codebook it is paired with).
    SchemaMismatch,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::ConfigInvalid => "ConfigInvalid",
            ErrorKind::FileMissing => "FileMissing",
            ErrorKind::SchemaMismatch => "SchemaMismatch",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::ConfigInvalid,
            message: message.into(),
        }
    }

    pub fn missing(path: &Path) -> Self {
        Self {
            kind: ErrorKind::FileMissing,
            message: format!("{} not found", path.display()),
        }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::SchemaMismatch,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}: {}", self.kind.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

fn from_io(err: &std::io::Error, context: &str) -> CliError {
    CliError {
        kind: ErrorKind::FileMissing,
        message: format!("{context}: {err}"),
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        from_io(&err, "io failure")
    }
}

impl From<serde_json::Error> for CliError {
    fn from(err: serde_json::Error) -> Self {
        CliError::schema(err.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(err: csv::Error) -> Self {
        CliError::schema(err.to_string())
    }
}

impl From<ArtifactError> for CliError {
    fn from(err: ArtifactError) -> Self {
        match err {
            ArtifactError::Io(io) => from_io(&io, "artifact io failure"),
            ArtifactError::Json(j) => CliError::schema(j.to_string()),
            ArtifactError::SchemaMismatch(msg) => CliError::schema(msg),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(err: IngestError) -> Self {
        match err {
            IngestError::Io(io) => from_io(&io, "input io failure"),
            IngestError::InvalidStateCount(_)
            | IngestError::InvalidFraction(_)
            | IngestError::InvalidSpec(_) => CliError::config(err.to_string()),
            _ => CliError::schema(err.to_string()),
        }
    }
}

impl From<HmmError> for CliError {
    fn from(err: HmmError) -> Self {
        match err {
            HmmError::NegativeAlpha(_) => CliError::config(err.to_string()),
            _ => CliError::schema(err.to_string()),
        }
    }
}

impl From<VqError> for CliError {
    fn from(err: VqError) -> Self {
        match err {
            VqError::InvalidParams(_) | VqError::AlphabetOverflow { .. } => {
                CliError::config(err.to_string())
            }
            _ => CliError::schema(err.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(err: BaselineError) -> Self {
        match err {
            BaselineError::NegativeAlpha(_) => CliError::config(err.to_string()),
            _ => CliError::schema(err.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(err: EvalError) -> Self {
        match err {
            EvalError::InvalidRepetitions => CliError::config(err.to_string()),
            _ => CliError::schema(err.to_string()),
        }
    }
}
