use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CedError, Result};

pub const MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// sha256 of the canonical JSON of `effective_config`.
    pub config_hash: String,
    pub effective_config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub input_paths: Vec<PathBuf>,
    pub output_paths: Vec<PathBuf>,
    pub tool_version: String,
    pub timestamp: String,
}

pub fn config_hash(config: &serde_json::Value) -> String {
    // serde_json maps are ordered, so this serialisation is canonical
    hex::encode(Sha256::digest(serde_json::to_vec(config).expect("json value serialises")))
}

impl RunManifest {
    pub fn new(command: &str, effective_config: serde_json::Value, seeds: BTreeMap<String, u64>) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash(&effective_config),
            effective_config,
            seeds,
            input_paths: Vec::new(),
            output_paths: Vec::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        super::write_atomic(path, text.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CedError::io(format!("reading manifest {}", path.display()), e))?;
        serde_json::from_str(&text).map_err(|e| CedError::json(format!("parsing manifest {}", path.display()), e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_every_parameter() {
        let a = serde_json::json!({"train": {"lr": 0.001, "epochs": 3}});
        let b = serde_json::json!({"train": {"epochs": 3, "lr": 0.001}});
        let c = serde_json::json!({"train": {"epochs": 4, "lr": 0.001}});
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&c));
        assert_eq!(config_hash(&a).len(), 64);
    }
}
