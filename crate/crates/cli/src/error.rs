use std::path::{Path, PathBuf};

use serde::Serialize;
use skelfit_core::Error as CoreError;

/// Failure classes, each with a fixed process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Usage,
    Config,
    Divergence,
    Io,
}

impl Kind {
    pub fn exit_code(self) -> i32 {
        match self {
            Kind::Usage | Kind::Config => 2,
            Kind::Divergence => 3,
            Kind::Io => 4,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
    pub path: Option<PathBuf>,
}

impl CliError {
    pub fn new(kind: Kind, message: impl Into<String>) -> Self {
        CliError { kind, message: message.into(), path: None }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Kind::Usage, message)
    }

    pub fn at(mut self, path: &Path) -> Self {
        self.path.get_or_insert_with(|| path.to_path_buf());
        self
    }

    /// Reclassifies any failure while reading a configuration file.
    pub fn into_config(mut self, path: &Path) -> Self {
        self.kind = Kind::Config;
        self.at(path)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::new(Kind::Io, format!("{}: {err}", path.display())).at(path)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "error": {
                "kind": self.kind,
                "exit_code": self.kind.exit_code(),
                "message": self.message,
                "path": self.path,
            }
        })
    }
}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        let kind = match &err {
            CoreError::Io { .. } | CoreError::Parse { .. } | CoreError::Json(_) => Kind::Io,
            CoreError::Diverged { .. } => Kind::Divergence,
            _ => Kind::Usage,
        };
        let path = match &err {
            CoreError::Io { path, .. } | CoreError::Parse { path, .. } => Some(path.clone()),
            _ => None,
        };
        CliError { kind, message: err.to_string(), path }
    }
}

pub type CliResult<T> = Result<T, CliError>;
