//! Input files, sweeps over the step size, reports, certificate files and
//! geometry export.

pub mod certificate;
pub mod config;
pub mod generate;
pub mod plot;
pub mod report;
pub mod sweep;

use std::io::Write;
use std::path::Path;

use thiserror::Error;

use crate::system::SystemError;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: &str, e: &serde_json::Error) -> Self {
        // serde_json appends " at line L column C"; keep only the message.
        let msg = e.to_string();
        let message = match msg.rfind(" at line ") {
            Some(i) => msg[..i].to_string(),
            None => msg,
        };
        IoError::Parse {
            path: path.to_string(),
            line: e.line(),
            column: e.column(),
            message,
        }
    }

    pub(crate) fn validation(path: &str, e: impl std::fmt::Display) -> Self {
        IoError::Validation {
            path: path.to_string(),
            message: e.to_string(),
        }
    }
}

impl From<(String, SystemError)> for IoError {
    fn from((path, e): (String, SystemError)) -> Self {
        IoError::validation(&path, e)
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| IoError::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| IoError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| IoError::io(path, e))?;
    tmp.persist(path).map_err(|e| IoError::io(path, e.error))?;
    Ok(())
}
