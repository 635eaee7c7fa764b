// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where layer norms sit relative to the residual adds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStyle {
    /// `h += attn(LN1(h)); h += mlp(LN2(h))`
    PrelnSequential,
    /// `h = LN1(h + attn(h)); h = LN2(h + mlp(h))`
    PostlnSequential,
    /// `h = h + attn(LN1(h)) + mlp(LN2(h))` (GPT-NeoX / Pythia)
    ParallelResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosStyle {
    LearnedAbsolute,
    Rotary,
}

/// MLP nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`
    #[default]
    GeluTanh,
    /// `0.5 x (1 + erf(x / sqrt(2)))`
    GeluErf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub d_mlp: usize,
    pub vocab_size: usize,
    pub n_ctx: usize,
    pub block_style: BlockStyle,
    pub pos_style: PosStyle,
    #[serde(default = "default_rotary_base")]
    pub rotary_base: f64,
    /// Number of leading head dimensions that are rotated; `None` rotates all of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rotary_dim: Option<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub ln_eps: f64,
}

fn default_rotary_base() -> f64 {
    10_000.0
}

impl ModelConfig {
    /// The desk-scale model trained by the built-in trainer.
    pub fn desk_default() -> Self {
        ModelConfig {
            n_layers: 2,
            n_heads: 4,
            d_model: 64,
            d_head: 16,
            d_mlp: 256,
            vocab_size: 128,
            n_ctx: 64,
            block_style: BlockStyle::PrelnSequential,
            pos_style: PosStyle::LearnedAbsolute,
            rotary_base: default_rotary_base(),
            rotary_dim: None,
            activation: Activation::GeluTanh,
            ln_eps: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.n_layers == 0 {
            return fail("n_layers must be >= 1");
        }
        if self.n_heads == 0 {
            return fail("n_heads must be >= 1");
        }
        if self.d_model == 0 || self.d_head == 0 || self.d_mlp == 0 {
            return fail("d_model, d_head and d_mlp must be positive");
        }
        if self.vocab_size < 2 {
            return fail("vocab_size must be >= 2");
        }
        if self.n_ctx == 0 {
            return fail("n_ctx must be positive");
        }
        if !(self.ln_eps > 0.0 && self.ln_eps.is_finite()) {
            return fail("ln_eps must be a positive finite number");
        }
        if self.pos_style == PosStyle::Rotary {
            if !(self.rotary_base > 0.0 && self.rotary_base.is_finite()) {
                return fail("rotary_base must be positive");
            }
            let dim = self.rotary_dim();
            if dim == 0 || dim > self.d_head {
                return fail("rotary_dim must be in 1..=d_head");
            }
            if !dim.is_multiple_of(2) {
                return Err(Error::OddRotaryDim(dim));
            }
        }
        Ok(())
    }

    /// Rotated dimensions per head (rotary only).
    pub fn rotary_dim(&self) -> usize {
        self.rotary_dim.unwrap_or(self.d_head)
    }

    pub fn num_components(&self) -> usize {
        1 + self.n_layers * self.n_heads + self.n_layers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_default_is_valid() {
        ModelConfig::desk_default().validate().unwrap();
    }

    #[test]
    fn rejects_degenerate_configs() {
        let mut c = ModelConfig::desk_default();
        c.vocab_size = 1;
        assert!(c.validate().is_err());

        let mut c = ModelConfig::desk_default();
        c.ln_eps = 0.0;
        assert!(c.validate().is_err());

        let mut c = ModelConfig::desk_default();
        c.pos_style = PosStyle::Rotary;
        c.d_head = 3;
        assert!(matches!(c.validate(), Err(Error::OddRotaryDim(3))));
    }

    #[test]
    fn serde_uses_snake_case_enums() {
        let json = serde_json::to_value(ModelConfig::desk_default()).unwrap();
        assert_eq!(json["block_style"], "preln_sequential");
        assert_eq!(json["pos_style"], "learned_absolute");
        let back: ModelConfig = serde_json::from_value(json).unwrap();
        assert_eq!(back, ModelConfig::desk_default());
    }
}
