//! Summary JSON written by every command.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use muse_core::io::{write_json, KeyValueConfig};
use muse_core::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    /// SHA-256 of the canonical config after command-line overrides.
    pub config_hash: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<String>,
}

pub fn config_hash(cfg: &KeyValueConfig) -> String {
    hex::encode(Sha256::digest(cfg.canonical().as_bytes()))
}

impl Summary {
    pub fn new(command: &str, cfg: &KeyValueConfig, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash(cfg),
            seed,
            metrics: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn metric(&mut self, key: impl Into<String>, value: impl Into<serde_json::Value>) {
        self.metrics.insert(key.into(), value.into());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// Writes `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join("summary.json"), self)
    }
}
