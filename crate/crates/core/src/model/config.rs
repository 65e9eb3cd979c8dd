use serde::{Deserialize, Serialize};

use crate::data::PromptOptions;
use crate::error::{Error, Result};
use crate::nn::{BlockConfig, DecoderFamily};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// Project, concatenate, condense.
    Concat,
    /// Project, self-attend across the projected branch tokens, mean-pool, condense.
    SelfAttend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossWeighting {
    /// `β1·L_SEQ + β2·L_EXP + β3·L_RP`.
    Weighted,
    /// Mean of the enabled components.
    Unweighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adafactor,
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LumenConfig {
    pub d_v: usize,
    pub d_t: usize,
    pub d_e: usize,
    pub fusion_width: usize,
    pub n_classes: usize,
    /// Weights of `L_SEQ`, `L_EXP`, `L_RP`.
    pub betas: [f64; 3],
    pub visual: bool,
    pub entity: bool,
    pub generator: bool,
    pub fusion: FusionMode,
    pub optimizer: OptimizerKind,
    pub loss_weighting: LossWeighting,
    pub decoder: DecoderFamily,
    pub prompt: PromptOptions,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Feed-forward width as a multiple of each branch's width.
    pub ffn_mult: usize,
    pub max_len: usize,
    pub patch: usize,
    pub image_size: usize,
    pub vocab_size: usize,
}

pub const DEFAULT_BETAS: [f64; 3] = [0.2, 0.5, 0.3];

impl LumenConfig {
    /// Laptop-scale model: 64-wide branches, two layers, 32×32 images.
    pub fn desk(vocab_size: usize) -> Self {
        LumenConfig {
            d_v: 64,
            d_t: 64,
            d_e: 64,
            fusion_width: 512,
            n_classes: 3,
            betas: DEFAULT_BETAS,
            visual: true,
            entity: true,
            generator: true,
            fusion: FusionMode::Concat,
            optimizer: OptimizerKind::Adafactor,
            loss_weighting: LossWeighting::Weighted,
            decoder: DecoderFamily::EncoderDecoder,
            prompt: PromptOptions::default(),
            n_layers: 2,
            n_heads: 4,
            ffn_mult: 2,
            max_len: 128,
            patch: 8,
            image_size: 32,
            vocab_size,
        }
    }

    /// Smallest useful model, for gradient checks and fast tests. Expects 8×8 images.
    pub fn tiny(vocab_size: usize) -> Self {
        LumenConfig {
            d_v: 16,
            d_t: 16,
            d_e: 16,
            fusion_width: 32,
            n_heads: 2,
            max_len: 64,
            patch: 4,
            image_size: 8,
            ..Self::desk(vocab_size)
        }
    }

    /// Branch widths of ViT-base, DeBERTa-v2-xlarge and T5-large. Building it allocates hundreds of millions of
    /// parameters; it exists for configuration parity, not for desk training.
    pub fn full_scale(vocab_size: usize) -> Self {
        LumenConfig {
            d_v: 768,
            d_t: 1536,
            d_e: 1024,
            n_layers: 24,
            n_heads: 16,
            ffn_mult: 4,
            max_len: 512,
            patch: 16,
            image_size: 224,
            ..Self::desk(vocab_size)
        }
    }

    fn block(&self, d_model: usize) -> BlockConfig {
        BlockConfig {
            d_model,
            n_layers: self.n_layers,
            n_heads: self.n_heads,
            ffn_width: self.ffn_mult * d_model,
            max_len: self.max_len,
            vocab_size: self.vocab_size,
        }
    }

    pub fn text_block(&self) -> BlockConfig {
        self.block(self.d_t)
    }

    pub fn image_block(&self) -> BlockConfig {
        self.block(self.d_v)
    }

    pub fn generator_block(&self) -> BlockConfig {
        self.block(self.d_e)
    }

    pub fn enabled_branches(&self) -> usize {
        [self.visual, self.entity, self.generator]
            .iter()
            .filter(|&&b| b)
            .count()
    }

    /// Width of the concatenated projections fed to the condensation layer.
    pub fn concat_width(&self) -> usize {
        match self.fusion {
            FusionMode::Concat => self.fusion_width * self.enabled_branches(),
            FusionMode::SelfAttend => self.fusion_width,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_classes != 3 {
            return Err(Error::Config(format!(
                "n_classes must be 3, got {}",
                self.n_classes
            )));
        }
        if self.enabled_branches() == 0 {
            return Err(Error::Config("at least one branch must be enabled".into()));
        }
        if self.betas.iter().any(|b| !b.is_finite() || *b < 0.0) {
            return Err(Error::Config(format!(
                "betas must be finite and non-negative, got {:?}",
                self.betas
            )));
        }
        if self.loss_weighting == LossWeighting::Weighted {
            let live = [self.entity, self.generator, true];
            if !self.betas.iter().zip(live).any(|(b, on)| on && *b > 0.0) {
                return Err(Error::Config(
                    "every enabled loss has zero weight; nothing would be trained".into(),
                ));
            }
        }
        if self.fusion_width == 0 || self.patch == 0 || self.image_size == 0 {
            return Err(Error::Config(
                "fusion_width, patch and image_size must be positive".into(),
            ));
        }
        if self.fusion == FusionMode::SelfAttend && self.fusion_width % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "fusion_width {} is not divisible by n_heads {}",
                self.fusion_width, self.n_heads
            )));
        }
        for block in [self.text_block(), self.image_block(), self.generator_block()] {
            block.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_is_valid_and_full_scale_matches_branch_widths() {
        assert!(LumenConfig::desk(100).validate().is_ok());
        let p = LumenConfig::full_scale(100);
        assert!(p.validate().is_ok());
        assert_eq!((p.d_v, p.d_t, p.d_e, p.fusion_width), (768, 1536, 1024, 512));
        assert_eq!(p.betas, [0.2, 0.5, 0.3]);
        assert_eq!(p.concat_width(), 1536);
    }

    #[test]
    fn ablated_concat_width() {
        let cfg = LumenConfig {
            visual: false,
            ..LumenConfig::desk(10)
        };
        assert_eq!(cfg.concat_width(), 1024);
    }

    #[test]
    fn rejects_bad_configs() {
        let base = LumenConfig::desk(10);
        let none = LumenConfig {
            visual: false,
            entity: false,
            generator: false,
            ..base.clone()
        };
        assert!(none.validate().is_err());
        let neg = LumenConfig {
            betas: [-0.1, 0.5, 0.6],
            ..base.clone()
        };
        assert!(neg.validate().is_err());
        let classes = LumenConfig {
            n_classes: 4,
            ..base.clone()
        };
        assert!(classes.validate().is_err());
        let heads = LumenConfig {
            n_heads: 5,
            ..base
        };
        assert!(heads.validate().is_err());
    }
}
