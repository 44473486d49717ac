use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Provenance record written by every artifact-producing command, on
/// success and on failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_fingerprint: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub metrics: serde_json::Value,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub tool_version: String,
    pub exit_code: Option<i32>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn start(command: &str, config_fingerprint: String) -> Self {
        RunManifest {
            command: command.to_string(),
            config_fingerprint,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            metrics: serde_json::Value::Null,
            started_at: Utc::now(),
            finished_at: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            exit_code: None,
            error: None,
        }
    }

    pub fn finish(&mut self, exit_code: i32, error: Option<String>) {
        self.finished_at = Some(Utc::now());
        self.exit_code = Some(exit_code);
        self.error = error;
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let text = serde_json::to_string_pretty(self).expect("manifest is serializable");
        std::fs::write(dir.join(MANIFEST_FILE), text + "\n")
    }

    pub fn read(dir: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}
