//! Effective configuration: built-in defaults, overlaid by a TOML file,
//! overlaid by command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::SynthConfig;
use crate::error::{CedError, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

/// Sections of a config file; every section and key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub synth: toml::Table,
    #[serde(default)]
    pub model: toml::Table,
    #[serde(default)]
    pub train: toml::Table,
    #[serde(default)]
    pub analysis: toml::Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub beta: f64,
    pub repeats: usize,
    pub pause_threshold: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { beta: crate::entrainment::DEFAULT_BETA, repeats: 30, pause_threshold: 0.5 }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(CedError::Config("analysis.beta must be > 0".into()));
        }
        if self.repeats == 0 {
            return Err(CedError::Config("analysis.repeats must be >= 1".into()));
        }
        if !(self.pause_threshold >= 0.0) {
            return Err(CedError::Config("analysis.pause_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CedError::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CedError::Config(format!("{}: {e}", path.display())))
    }

    pub fn synth(&self) -> Result<SynthConfig> {
        section(&self.synth, "synth")
    }

    pub fn model(&self) -> Result<ModelConfig> {
        section(&self.model, "model")
    }

    /// Whether the file pins the model input dimension.
    pub fn model_sets_input_dim(&self) -> bool {
        self.model.contains_key("input_dim")
    }

    pub fn train(&self) -> Result<TrainConfig> {
        section(&self.train, "train")
    }

    pub fn analysis(&self) -> Result<AnalysisConfig> {
        section(&self.analysis, "analysis")
    }
}

fn section<T: serde::de::DeserializeOwned + Serialize>(table: &toml::Table, name: &str) -> Result<T> {
    // round-trip through JSON so unknown keys surface as errors below
    let value = serde_json::to_value(table).map_err(|e| CedError::Config(format!("[{name}]: {e}")))?;
    let known = serde_json::to_value(
        serde_json::from_value::<T>(serde_json::json!({})).map_err(|e| CedError::Config(format!("[{name}]: {e}")))?,
    );
    if let (serde_json::Value::Object(given), Ok(serde_json::Value::Object(defaults))) = (&value, known) {
        if let Some(k) = given.keys().find(|k| !defaults.contains_key(*k)) {
            return Err(CedError::Config(format!("[{name}]: unknown key {k}")));
        }
    }
    serde_json::from_value(value).map_err(|e| CedError::Config(format!("[{name}]: {e}")))
}

/// Overwrites `slot` when the flag was given.
pub fn overlay<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> FileConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn empty_file_gives_defaults() {
        let f = parse("");
        assert_eq!(f.train().unwrap(), TrainConfig::default());
        assert_eq!(f.model().unwrap(), ModelConfig::default());
        assert!(!f.model_sets_input_dim());
    }

    #[test]
    fn file_values_override_defaults() {
        let f = parse("seed = 4\n[train]\nlearning_rate = 0.001\n[model]\ninput_dim = 16\npooling = \"first\"\n");
        assert_eq!(f.seed, Some(4));
        assert_eq!(f.train().unwrap().learning_rate, 1e-3);
        let m = f.model().unwrap();
        assert_eq!(m.input_dim, 16);
        assert_eq!(m.pooling, crate::model::Pooling::First);
        assert!(f.model_sets_input_dim());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse("[train]\nlearning_rat = 0.1\n").train().is_err());
        assert!(toml::from_str::<FileConfig>("[trian]\n").is_err());
    }

    #[test]
    fn flag_beats_file() {
        let mut cfg = parse("[train]\nmax_epochs = 7\n").train().unwrap();
        overlay(&mut cfg.max_epochs, Some(2));
        assert_eq!(cfg.max_epochs, 2);
        overlay(&mut cfg.patience, None);
        assert_eq!(cfg.patience, 10);
    }
}
