use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Number of feature levels; the architecture is built around exactly three.
pub const NUM_LEVELS: usize = 3;

/// Deformable encoder hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Shared channel count C inside the neck.
    pub hidden_dim: usize,
    /// Attention heads.
    pub heads: usize,
    /// Sampling points per head per level.
    pub points: usize,
    /// Fixed at 3.
    pub levels: usize,
    pub ffn_dim: usize,
    pub dropout_rate: f64,
    /// Fixed at 1; a single encoder keeps inference cheap.
    pub encoder_layers: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        // Desk-scale defaults; the full-scale lineage values would be
        // hidden_dim 64, heads 8, points 4.
        EncoderConfig {
            hidden_dim: 32,
            heads: 2,
            points: 2,
            levels: NUM_LEVELS,
            ffn_dim: 128,
            dropout_rate: 0.1,
            encoder_layers: 1,
        }
    }
}

impl EncoderConfig {
    /// Minimal configuration used by the gradient-check suite.
    pub fn tiny() -> Self {
        EncoderConfig {
            hidden_dim: 8,
            heads: 2,
            points: 2,
            levels: NUM_LEVELS,
            ffn_dim: 16,
            dropout_rate: 0.1,
            encoder_layers: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels != NUM_LEVELS {
            return Err(Error::config(format!("levels must be {NUM_LEVELS}, got {}", self.levels)));
        }
        if self.encoder_layers != 1 {
            return Err(Error::config(format!(
                "encoder_layers must be 1, got {}",
                self.encoder_layers
            )));
        }
        if self.hidden_dim == 0 || self.heads == 0 || self.points == 0 || self.ffn_dim == 0 {
            return Err(Error::config("encoder dimensions must be positive"));
        }
        if self.hidden_dim % self.heads != 0 {
            return Err(Error::config(format!(
                "hidden_dim {} not divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        // positional embedding splits channels into sin/cos pairs per axis
        if self.hidden_dim % 4 != 0 {
            return Err(Error::config(format!(
                "hidden_dim {} must be divisible by 4",
                self.hidden_dim
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }
}

/// Full model architecture description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Channel counts per level, coarsest first (strides 16 / 8 / 4).
    pub backbone_channels: [usize; NUM_LEVELS],
    pub encoder: EncoderConfig,
    /// With the neck disabled the head runs directly on the finest
    /// backbone level (the ablation baseline).
    pub use_dten: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone_channels: [64, 32, 16],
            encoder: EncoderConfig::default(),
            use_dten: true,
        }
    }
}

impl ModelConfig {
    pub fn tiny() -> Self {
        ModelConfig {
            backbone_channels: [8, 8, 4],
            encoder: EncoderConfig::tiny(),
            use_dten: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.backbone_channels.iter().any(|&c| c == 0) {
            return Err(Error::config("backbone channels must be positive"));
        }
        self.encoder.validate()
    }

    /// Channel count entering the segmentation head.
    pub fn head_in_channels(&self) -> usize {
        if self.use_dten {
            self.encoder.hidden_dim
        } else {
            self.backbone_channels[NUM_LEVELS - 1]
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ModelConfig::default().validate().unwrap();
        ModelConfig::tiny().validate().unwrap();
    }

    #[test]
    fn invalid_heads_rejected() {
        let mut cfg = EncoderConfig::default();
        cfg.heads = 3;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn wrong_level_count_rejected() {
        let mut cfg = EncoderConfig::default();
        cfg.levels = 4;
        assert!(cfg.validate().is_err());
    }
}
