use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Audit row for one executed (or reused) stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub input_count: usize,
    pub output_count: usize,
    /// Digest of the stage settings chained on the upstream content digest.
    pub config_digest: String,
    /// Order-independent digest of the stage output rows.
    pub content_digest: String,
    /// Output file relative to the run directory.
    pub output: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    /// Records whose model request failed after retries.
    pub deferred: usize,
    /// Records dropped because a response could not be interpreted.
    pub errors: usize,
    /// Model requests issued by this execution.
    pub requests: u64,
    /// True when the output was taken from a previous run.
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed { stage: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub run_config_digest: String,
    pub stages: Vec<StageRecord>,
    pub status: RunStatus,
}

impl PipelineManifest {
    pub const FILE: &'static str = "manifest.json";

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            line: e.line(),
            source: e,
        })
    }

    /// Writes pretty JSON through a temporary file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(&tmp, text + "\n").map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// `(name, content digest)` per stage, the reproducibility fingerprint.
    pub fn content_digests(&self) -> Vec<(String, String)> {
        self.stages
            .iter()
            .map(|s| (s.name.clone(), s.content_digest.clone()))
            .collect()
    }

    pub fn total_requests(&self) -> u64 {
        self.stages.iter().map(|s| s.requests).sum()
    }
}
