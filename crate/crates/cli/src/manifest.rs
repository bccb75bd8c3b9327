//! Run manifests: one JSON file per stage, written atomically at stage
//! start (status "running") and again at completion. Fingerprints recorded
//! here are what make stale-artifact use an error downstream.

use crate::config::RunConfig;
use anyhow::Result;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub status: String,
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub started_at_unix: u64,
    pub finished_at_unix: Option<u64>,
    pub input_fingerprints: BTreeMap<String, String>,
    pub artifacts: Vec<String>,
}

fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn start(stage: &str, config: &RunConfig) -> RunManifest {
        RunManifest {
            stage: stage.to_string(),
            status: "running".to_string(),
            config_hash: config.hash(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            started_at_unix: now_unix(),
            finished_at_unix: None,
            input_fingerprints: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn fingerprint(&mut self, name: &str, value: &str) {
        self.input_fingerprints
            .insert(name.to_string(), value.to_string());
    }

    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }

    pub fn path(out_dir: &Path, stage: &str) -> PathBuf {
        out_dir.join("manifest").join(format!("{stage}.json"))
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        let path = Self::path(out_dir, &self.stage);
        let json = serde_json::to_string_pretty(self)?;
        fdrec_core::io::atomic_write(&path, json.as_bytes())?;
        Ok(())
    }

    pub fn complete(mut self, out_dir: &Path) -> Result<()> {
        self.status = "complete".to_string();
        self.finished_at_unix = Some(now_unix());
        self.write(out_dir)
    }

    pub fn abort(mut self, out_dir: &Path, reason: &str) -> Result<()> {
        self.status = format!("aborted: {reason}");
        self.finished_at_unix = Some(now_unix());
        self.write(out_dir)
    }
}
