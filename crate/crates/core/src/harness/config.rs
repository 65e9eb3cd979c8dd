use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{PromptOptions, Split, SyntheticSpec};
use crate::decoding::DecodeConfig;
use crate::error::{Error, Result};
use crate::metrics::Suite;
use crate::model::{FusionMode, LossWeighting, LumenConfig, OptimizerKind, TrainConfig, DEFAULT_BETAS};
use crate::nn::DecoderFamily;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Tiny,
    Desk,
}

/// Switches layered over a size preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelFlags {
    pub scale: Scale,
    pub visual: bool,
    pub entity: bool,
    pub generator: bool,
    pub fusion: FusionMode,
    pub optimizer: OptimizerKind,
    pub loss_weighting: LossWeighting,
    pub betas: [f64; 3],
    pub decoder: DecoderFamily,
    pub include_caption: bool,
    pub include_ocr: bool,
}

impl Default for ModelFlags {
    fn default() -> Self {
        ModelFlags {
            scale: Scale::Desk,
            visual: true,
            entity: true,
            generator: true,
            fusion: FusionMode::Concat,
            optimizer: OptimizerKind::Adafactor,
            loss_weighting: LossWeighting::Weighted,
            betas: DEFAULT_BETAS,
            decoder: DecoderFamily::EncoderDecoder,
            include_caption: true,
            include_ocr: true,
        }
    }
}

impl ModelFlags {
    pub fn resolve(&self, vocab_size: usize) -> Result<LumenConfig> {
        let base = match self.scale {
            Scale::Tiny => LumenConfig::tiny(vocab_size),
            Scale::Desk => LumenConfig::desk(vocab_size),
        };
        let cfg = LumenConfig {
            visual: self.visual,
            entity: self.entity,
            generator: self.generator,
            fusion: self.fusion,
            optimizer: self.optimizer,
            loss_weighting: self.loss_weighting,
            betas: self.betas,
            decoder: self.decoder,
            prompt: PromptOptions {
                include_ocr: self.include_ocr,
                include_caption: self.include_caption,
            },
            ..base
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Line-delimited dataset file.
    File { path: PathBuf },
    /// Generated corpus; its image size follows the model preset.
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingChoice {
    /// Seeded hash vectors.
    Hash,
    /// The trained generator's token embeddings.
    Model,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub model: ModelFlags,
    pub data: DataSource,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub decode: DecodeConfig,
    /// Split whose explanations are generated and scored.
    #[serde(default = "default_eval_split")]
    pub eval_split: Split,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    #[serde(default = "default_embedding")]
    pub embedding: EmbeddingChoice,
}

fn default_eval_split() -> Split {
    Split::Test
}

fn default_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}

fn default_embedding() -> EmbeddingChoice {
    EmbeddingChoice::Hash
}

/// Training settings; the shuffling seed comes from the experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_clip: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSettings {
            epochs: d.epochs,
            batch_size: d.batch_size,
            lr: d.lr,
            grad_clip: d.grad_clip,
        }
    }
}

impl ExperimentConfig {
    /// Full model on a small synthetic corpus with held-out validation and test splits.
    pub fn synthetic_default(name: &str) -> Self {
        ExperimentConfig {
            name: name.to_string(),
            seed: 0,
            model: ModelFlags::default(),
            data: DataSource::Synthetic(SyntheticSpec {
                seed: 7,
                per_role: [12, 12, 12],
                val_fraction: 0.15,
                test_fraction: 0.15,
                ..SyntheticSpec::default()
            }),
            train: TrainSettings::default(),
            decode: DecodeConfig::default(),
            eval_split: Split::Test,
            suites: Suite::ALL.to_vec(),
            embedding: EmbeddingChoice::Hash,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            grad_clip: self.train.grad_clip,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_name = !self.name.is_empty()
            && self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
        if !ok_name {
            return Err(Error::Config(format!(
                "experiment name {:?} must be non-empty ASCII letters, digits, '-', '_' or '.'",
                self.name
            )));
        }
        if self.suites.is_empty() {
            return Err(Error::Config("no metric suite requested".into()));
        }
        if self.train.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        self.decode.validate()?;
        self.model.resolve(1)?;
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    /// Applies `dotted.key=value` overrides. Values are read as TOML literals, falling back to a
    /// plain string.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        if overrides.is_empty() {
            return Ok(());
        }
        let mut tree = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            let mut node = &mut tree;
            let parts: Vec<&str> = key.trim().split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let table = node
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override key {key:?} does not name a table")))?;
                if i + 1 == parts.len() {
                    table.insert(part.to_string(), value.clone());
                    break;
                }
                node = table.entry(part.to_string()).or_insert_with(|| toml::Value::Table(Default::default()));
            }
        }
        let cfg: ExperimentConfig = tree.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    /// First eight hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash8(&self) -> String {
        let canon = serde_json::to_vec(self).expect("experiment config serializes");
        let digest = Sha256::digest(&canon);
        digest.iter().take(4).map(|b| format!("{b:02x}")).collect()
    }

    pub fn run_dir(&self, out_root: &Path) -> PathBuf {
        out_root.join(format!("{}-{}", self.name, self.hash8()))
    }
}

/// Named baseline families, each a pure flag setting on top of `base`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    /// Entity and generation branches only.
    TextOnly,
    /// Visual branch and a prompt without OCR text.
    ImageOnly,
    /// All inputs, trained on the generation loss alone.
    MultimodalSingleTask,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::TextOnly, Baseline::ImageOnly, Baseline::MultimodalSingleTask];

    pub fn label(self) -> &'static str {
        match self {
            Baseline::TextOnly => "text-only",
            Baseline::ImageOnly => "image-only",
            Baseline::MultimodalSingleTask => "multimodal non-MTL",
        }
    }

    pub fn apply(self, base: &ExperimentConfig) -> ExperimentConfig {
        let mut cfg = base.clone();
        match self {
            Baseline::TextOnly => cfg.model.visual = false,
            Baseline::ImageOnly => {
                cfg.model.entity = false;
                cfg.model.include_ocr = false;
            }
            Baseline::MultimodalSingleTask => cfg.model.betas = [0.0, 1.0, 0.0],
        }
        cfg.name = format!("{}-{}", base.name, self.label().replace(' ', "-"));
        cfg
    }
}
