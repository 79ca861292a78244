//! Exit codes and the one-line error report written to standard error.

use std::fmt;

use mcgtta_core::Error;

pub const OK: i32 = 0;
pub const INTERNAL: i32 = 1;
pub const CONFIG: i32 = 2;
pub const ARTIFACT_MISMATCH: i32 = 3;
pub const SCHEMA_MISMATCH: i32 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(message: String) -> Self {
        Self { code: CONFIG, kind: "config", message }
    }

    pub fn mismatch(message: String) -> Self {
        Self { code: ARTIFACT_MISMATCH, kind: "artifact_mismatch", message }
    }

    pub fn internal(message: String) -> Self {
        Self { code: INTERNAL, kind: "internal", message }
    }

    /// `{"error":..,"exit_code":..,"message":..}` on one line.
    pub fn line(&self) -> String {
        serde_json::json!({"error": self.kind, "exit_code": self.code, "message": self.message}).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::Config(_) | Error::MaskRange { .. } | Error::Length { .. } | Error::InputTooShort(_) => {
                Self::config(message)
            }
            Error::Schema { .. } => Self { code: SCHEMA_MISMATCH, kind: "schema_mismatch", message },
            Error::ArtifactMismatch(_) | Error::Format(_) => Self::mismatch(message),
            Error::PretrainDivergence { .. } => Self { code: INTERNAL, kind: "pretrain_divergence", message },
            _ => Self::internal(message),
        }
    }
}

/// File-system errors on named inputs are configuration errors that name the
/// path.
pub fn io_context(path: &std::path::Path) -> impl FnOnce(Error) -> CliError + '_ {
    move |e| match e {
        Error::Io(io) => CliError::config(format!("{}: {io}", path.display())),
        other => CliError::from(other),
    }
}
