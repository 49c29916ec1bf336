//! Architecture descriptor stored in every checkpoint.

use serde::{Deserialize, Serialize};

use super::backbone::{BackboneKind, DEFAULT_TCN_CHANNELS};
use super::types::{FRAME_DIM, HIDDEN_DIM, WINDOW_LEN};
use crate::error::{Error, Result};
use crate::nn::DEFAULT_LEAKY_SLOPE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    /// Generator, estimator and decoder.
    Gmf,
    /// Kinematics only, regressing the moment directly.
    BaselineNoQ,
    /// Kinematics branch and body-parameter branch concatenated before a linear head.
    BaselineFusion,
}

impl ModelFamily {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelFamily::Gmf => "gmf",
            ModelFamily::BaselineNoQ => "baseline_no_q",
            ModelFamily::BaselineFusion => "baseline_fusion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub family: ModelFamily,
    pub backbone: BackboneKind,
    pub frame_dim: usize,
    pub window_len: usize,
    pub gru_hidden: usize,
    /// Hidden layers of the generator and decoder.
    pub mlp_hidden_layers: usize,
    pub mlp_width: usize,
    /// Width of both layers of the fusion baseline's body-parameter branch.
    pub q_branch_width: usize,
    pub tcn_channels: usize,
    pub leaky_slope: f64,
}

impl Architecture {
    pub fn new(family: ModelFamily, backbone: BackboneKind) -> Self {
        Architecture {
            family,
            backbone,
            frame_dim: FRAME_DIM,
            window_len: WINDOW_LEN,
            gru_hidden: HIDDEN_DIM,
            mlp_hidden_layers: 5,
            mlp_width: 32,
            q_branch_width: 16,
            tcn_channels: DEFAULT_TCN_CHANNELS,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn gmf() -> Self {
        Self::new(ModelFamily::Gmf, BackboneKind::Gru)
    }

    /// Rejects descriptors this build cannot evaluate.
    pub fn validate(&self) -> Result<()> {
        if self.frame_dim != FRAME_DIM || self.window_len != WINDOW_LEN || self.gru_hidden != HIDDEN_DIM {
            return Err(Error::Config(format!(
                "architecture expects {}-d frames, {}-step windows and {} hidden units; this build supports {FRAME_DIM}, {WINDOW_LEN} and {HIDDEN_DIM}",
                self.frame_dim, self.window_len, self.gru_hidden
            )));
        }
        if self.mlp_hidden_layers == 0 || self.mlp_width == 0 || self.q_branch_width == 0 || self.tcn_channels == 0 {
            return Err(Error::Config("layer widths and depths must be positive".into()));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Config(format!("LeakyReLU slope {} outside (0, 1)", self.leaky_slope)));
        }
        Ok(())
    }

    /// Widths of the generator/decoder stacks: 3 inputs, hidden layers, 1 output.
    pub fn mlp_dims(&self) -> Vec<usize> {
        let mut d = vec![3];
        d.extend(std::iter::repeat(self.mlp_width).take(self.mlp_hidden_layers));
        d.push(1);
        d
    }
}
