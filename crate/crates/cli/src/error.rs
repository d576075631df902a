use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid field {field}: {message}")]
    Validation { field: String, message: String },
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("missing weights file {}", .0.display())]
    MissingWeightsFile(PathBuf),
    #[error("weights file {}: {reason}", path.display())]
    FormatVersionMismatch { path: PathBuf, reason: String },
    #[error("weights file {}: checksum {stored:#010x} does not match payload {computed:#010x}", path.display())]
    ChecksumMismatch { path: PathBuf, stored: u32, computed: u32 },
    #[error("trace file {}: {message}", path.display())]
    TraceFormat { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] formation_core::Error),
}

impl CliError {
    /// Stable identifier printed on the machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Parse { .. } => "ParseError",
            Self::Validation { .. } => "ValidationError",
            Self::DimensionMismatch { .. } => "DimensionMismatch",
            Self::UnknownPreset(_) => "UnknownPreset",
            Self::MissingWeightsFile(_) => "MissingWeightsFile",
            Self::FormatVersionMismatch { .. } => "FormatVersionMismatch",
            Self::ChecksumMismatch { .. } => "ChecksumMismatch",
            Self::TraceFormat { .. } => "TraceFormatError",
            Self::Io { .. } => "IoError",
            Self::Core(formation_core::Error::NonFiniteState { .. }) => "NonFiniteState",
            Self::Core(_) => "CoreError",
        }
    }

    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Self {
        let path = path.into();
        move |source| Self::Io { path, source }
    }

    pub fn validation(field: impl Into<String>, message: impl ToString) -> Self {
        Self::Validation { field: field.into(), message: message.to_string() }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
