use serde::{Deserialize, Serialize};

use crate::error::{CedError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Mean over valid frames.
    Mean,
    /// First frame only.
    First,
}

/// Architecture hyperparameters. Defaults reproduce the ~2.1M-parameter
/// configuration (768-dim inputs, 352 conformer units, 64 transformer
/// units, 4 heads).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub conformer_units: usize,
    pub transformer_units: usize,
    pub heads: usize,
    pub conformer_layers: usize,
    pub cross_layers: usize,
    pub conv_kernel: usize,
    pub dropout: f64,
    pub max_frames: usize,
    pub pooling: Pooling,
    /// Hidden width of each of the two half-step conformer feed-forwards.
    pub conformer_ff_dim: usize,
    /// Hidden width of the cross-encoder feed-forward.
    pub cross_ff_dim: usize,
    pub head_hidden: usize,
    /// Tie the weights of cross-encoder 1 and cross-encoder 2.
    pub share_cross_weights: bool,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 768,
            conformer_units: 352,
            transformer_units: 64,
            heads: 4,
            conformer_layers: 1,
            cross_layers: 1,
            conv_kernel: 31,
            dropout: 0.2,
            max_frames: 512,
            pooling: Pooling::Mean,
            conformer_ff_dim: 576,
            cross_ff_dim: 256,
            head_hidden: 64,
            share_cross_weights: false,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration used for desk-scale experiments on synthetic data.
    pub fn toy(input_dim: usize) -> Self {
        Self {
            input_dim,
            conformer_units: 32,
            transformer_units: 16,
            heads: 2,
            conv_kernel: 7,
            conformer_ff_dim: 64,
            cross_ff_dim: 32,
            head_hidden: 16,
            max_frames: 64,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(CedError::Config(m));
        let positive = [
            ("input_dim", self.input_dim),
            ("conformer_units", self.conformer_units),
            ("transformer_units", self.transformer_units),
            ("heads", self.heads),
            ("conformer_layers", self.conformer_layers),
            ("cross_layers", self.cross_layers),
            ("conformer_ff_dim", self.conformer_ff_dim),
            ("cross_ff_dim", self.cross_ff_dim),
            ("head_hidden", self.head_hidden),
        ];
        for (name, v) in positive {
            if v == 0 {
                return fail(format!("{name} must be >= 1"));
            }
        }
        if !self.conformer_units.is_multiple_of(self.heads) {
            return fail(format!(
                "conformer_units ({}) must be divisible by heads ({})",
                self.conformer_units, self.heads
            ));
        }
        if !self.transformer_units.is_multiple_of(self.heads) {
            return fail(format!(
                "transformer_units ({}) must be divisible by heads ({})",
                self.transformer_units, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout ({}) must lie in [0, 1)", self.dropout));
        }
        if self.conv_kernel.is_multiple_of(2) {
            return fail(format!("conv_kernel ({}) must be odd", self.conv_kernel));
        }
        if self.max_frames < 2 {
            return fail("max_frames must be >= 2".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_toy_are_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::toy(16).validate().unwrap();
    }

    #[test]
    fn violations_name_the_constraint() {
        let err = ModelConfig { heads: 5, ..Default::default() }.validate().unwrap_err();
        assert!(err.to_string().contains("divisible by heads"), "{err}");
        let err = ModelConfig { conv_kernel: 4, ..Default::default() }.validate().unwrap_err();
        assert!(err.to_string().contains("odd"));
        let err = ModelConfig { dropout: 1.0, ..Default::default() }.validate().unwrap_err();
        assert!(err.to_string().contains("dropout"));
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg: ModelConfig = serde_json::from_str(r#"{"heads": 2, "pooling": "first"}"#).unwrap();
        assert_eq!(cfg.heads, 2);
        assert_eq!(cfg.pooling, Pooling::First);
        assert_eq!(cfg.conformer_units, 352);
    }
}
