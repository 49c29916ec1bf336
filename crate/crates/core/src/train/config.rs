use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::PipelineConfig;
use crate::error::{Error, Result};
use crate::model::backbone::DEFAULT_TCN_CHANNELS;
use crate::model::BackboneKind;
use crate::nn::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Generator, estimator and decoder trained together.
    Joint,
    BaselineNoQ,
    BaselineFusion,
    /// New estimator against a pretrained, frozen generator and decoder.
    FrozenGmfSwap,
}

impl std::str::FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "joint" | "gmf" => Ok(TrainMode::Joint),
            "baseline_no_q" => Ok(TrainMode::BaselineNoQ),
            "baseline_fusion" => Ok(TrainMode::BaselineFusion),
            "frozen_gmf_swap" | "frozen_swap" => Ok(TrainMode::FrozenGmfSwap),
            other => Err(Error::Config(format!(
                "unknown training mode {other:?} (joint, baseline_no_q, baseline_fusion, frozen_gmf_swap)"
            ))),
        }
    }
}

/// Training hyperparameters, read from TOML. Every field has a default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Weight of the estimator/generator agreement loss.
    pub w1: f64,
    /// Weight of the reconstruction loss through the decoder.
    pub w2: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub repetitions: usize,
    pub mode: TrainMode,
    pub backbone: BackboneKind,
    pub tcn_channels: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    pub train_stride: usize,
    pub val_stride: usize,
    /// Checkpoint providing the generator and decoder in frozen-swap mode.
    pub pretrained: Option<PathBuf>,
    /// Abort once the batch loss exceeds this value.
    pub divergence_limit: f64,
    pub pipeline: PipelineConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5000,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            w1: 1.0,
            w2: 0.05,
            batch_size: 256,
            seed: 0,
            repetitions: 5,
            mode: TrainMode::Joint,
            backbone: BackboneKind::Gru,
            tcn_channels: DEFAULT_TCN_CHANNELS,
            patience: None,
            train_stride: 5,
            val_stride: 5,
            pretrained: None,
            divergence_limit: 1e6,
            pipeline: PipelineConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.w1 > 0.0 && self.w2 > 0.0 && self.w1.is_finite() && self.w2.is_finite()) {
            return bad(format!("loss weights must be positive, got w1={} w2={}", self.w1, self.w2));
        }
        if self.epochs == 0 && self.mode != TrainMode::FrozenGmfSwap {
            return bad("epochs must be at least 1".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("Adam betas must lie in [0, 1) and eps must be positive".into());
        }
        if self.batch_size == 0 || self.repetitions == 0 || self.train_stride == 0 || self.val_stride == 0 {
            return bad("batch_size, repetitions and strides must be at least 1".into());
        }
        if self.tcn_channels == 0 {
            return bad("tcn_channels must be at least 1".into());
        }
        if self.patience == Some(0) {
            return bad("patience must be at least 1 when set".into());
        }
        if !(self.divergence_limit > 0.0) {
            return bad("divergence_limit must be positive".into());
        }
        Ok(())
    }
}
