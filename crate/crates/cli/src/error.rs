use azclip::Error;
use serde_json::json;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FILE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_FINGERPRINT: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            kind: "usage",
            message: message.into(),
        }
    }

    pub fn file(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_FILE,
            kind: "file",
            message: message.into(),
        }
    }

    /// One JSON object on one line.
    pub fn to_line(&self) -> String {
        let message = self
            .message
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        json!({ "error": self.kind, "exit_code": self.code, "message": message }).to_string()
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let (code, kind) = match &e {
            Error::InvalidArgument(_) => (EXIT_USAGE, "invalid_argument"),
            Error::Divergence { .. } => (EXIT_DIVERGENCE, "divergence"),
            Error::FingerprintMismatch { .. } => (EXIT_FINGERPRINT, "fingerprint_mismatch"),
            Error::BadMagic { .. } => (EXIT_FILE, "bad_magic"),
            Error::UnsupportedVersion { .. } => (EXIT_FILE, "unsupported_version"),
            Error::Truncated { .. } => (EXIT_FILE, "truncated"),
            Error::IdCountMismatch { .. } => (EXIT_FILE, "id_count_mismatch"),
            Error::CheckpointShape(_) => (EXIT_FILE, "checkpoint_shape"),
            Error::Malformed { .. } => (EXIT_FILE, "malformed"),
            Error::Manifest { .. } => (EXIT_FILE, "manifest"),
            Error::Dataset(_) => (EXIT_FILE, "dataset"),
            Error::Metrics(_) => (EXIT_FILE, "judgments"),
            Error::Io { .. } => (EXIT_FILE, "io"),
            Error::Json(_) => (EXIT_FILE, "json"),
            Error::ShapeMismatch { .. }
            | Error::DegenerateRow { .. }
            | Error::DegenerateId { .. } => (EXIT_FILE, "data"),
        };
        CliError {
            code,
            kind,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::file(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::file(e.to_string())
    }
}
