//! Run manifests: enough to replay a command from the record alone.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Ok,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    /// Arguments after the program name, verbatim.
    pub args: Vec<String>,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config_sha256: Option<String>,
    pub inputs: Vec<FileDigest>,
    /// Command-specific settings that are not part of a config file.
    pub parameters: serde_json::Map<String, serde_json::Value>,
    pub warnings: Vec<String>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub status: Status,
    pub error: Option<serde_json::Value>,
    #[serde(skip)]
    target: PathBuf,
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    fs::read(path).map(|b| sha256_bytes(&b)).map_err(|e| CliError::io(path, e))
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl Manifest {
    pub fn new(command: &str, target: PathBuf) -> Self {
        Manifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: None,
            config_sha256: None,
            inputs: Vec::new(),
            parameters: serde_json::Map::new(),
            warnings: Vec::new(),
            started_at: now(),
            finished_at: None,
            status: Status::Running,
            error: None,
            target,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileDigest { path: path.to_path_buf(), sha256 });
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        self.parameters
            .insert(key.to_string(), serde_json::to_value(value).expect("plain data serializes"));
    }

    pub fn write(&self) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("plain data serializes");
        fs::write(&self.target, text + "\n").map_err(|e| CliError::io(&self.target, e))
    }

    /// Records the outcome and rewrites the file. A failure to write the
    /// final record is reported only if the run itself succeeded.
    pub fn finish<T>(mut self, outcome: CliResult<T>) -> CliResult<T> {
        self.finished_at = Some(now());
        match &outcome {
            Ok(_) => self.status = Status::Ok,
            Err(e) => {
                self.status = Status::Failed;
                self.error = Some(e.to_json()["error"].clone());
            }
        }
        let written = self.write();
        match outcome {
            Ok(v) => written.map(|_| v),
            Err(e) => Err(e),
        }
    }
}
