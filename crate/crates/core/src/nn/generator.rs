use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::BlockConfig;
use super::layers::{attention_mask, DecoderLayer, Embeddings, EncoderStack, LayerNorm, Linear};
use crate::data::{BOS, CLS, EOS, PAD, SEP};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{log_softmax_rows, Graph, ParamStore, Tensor, Var};

/// How the prompt conditions generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderFamily {
    /// Prompt encoder plus a decoder with cross-attention.
    EncoderDecoder,
    /// One causal stack over the prompt followed by the target.
    DecoderOnly,
}

#[derive(Debug, Clone)]
enum Body {
    EncoderDecoder {
        encoder: EncoderStack,
        layers: Vec<DecoderLayer>,
        ln_final: LayerNorm,
    },
    DecoderOnly {
        stack: EncoderStack,
    },
}

/// Prompt-conditioned autoregressive generator sharing one embedding table between prompt and
/// target tokens.
#[derive(Debug, Clone)]
pub struct PromptedGenerator {
    pub config: BlockConfig,
    pub family: DecoderFamily,
    pub embeddings: Embeddings,
    pub head: Linear,
    body: Body,
    allowed: Vec<bool>,
}

/// Teacher-forced pass over one target sequence.
#[derive(Debug, Clone, Copy)]
pub struct TeacherForced {
    /// Masked next-token logits `[T, V]`, one row per predicted position.
    pub logits: Var,
    /// Decoder hidden states `[T, d]` at the predicting positions.
    pub hidden: Var,
    /// Mean of `hidden` over positions.
    pub pooled: Var,
    /// Mean next-token negative log-likelihood.
    pub loss: Var,
    pub steps: usize,
}

impl PromptedGenerator {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        config: BlockConfig,
        family: DecoderFamily,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let embeddings = Embeddings::new(
            store,
            &format!("{name}.embed"),
            config.vocab_size,
            config.max_len,
            d,
            rng,
        );
        let body = match family {
            DecoderFamily::EncoderDecoder => Body::EncoderDecoder {
                encoder: EncoderStack::new(
                    store,
                    &format!("{name}.encoder"),
                    d,
                    config.n_layers,
                    config.n_heads,
                    config.ffn_width,
                    rng,
                ),
                layers: (0..config.n_layers)
                    .map(|i| {
                        DecoderLayer::new(
                            store,
                            &format!("{name}.decoder.layer{i}"),
                            d,
                            config.n_heads,
                            config.ffn_width,
                            rng,
                        )
                    })
                    .collect(),
                ln_final: LayerNorm::new(store, &format!("{name}.decoder.ln_final"), d),
            },
            DecoderFamily::DecoderOnly => Body::DecoderOnly {
                stack: EncoderStack::new(
                    store,
                    &format!("{name}.decoder"),
                    d,
                    config.n_layers,
                    config.n_heads,
                    config.ffn_width,
                    rng,
                ),
            },
        };
        let head = Linear::new(store, &format!("{name}.head"), d, config.vocab_size, rng);
        Ok(PromptedGenerator {
            config,
            family,
            embeddings,
            head,
            body,
            allowed: default_allowed(config.vocab_size),
        })
    }

    /// Ids the output distribution may place mass on.
    pub fn allowed(&self) -> &[bool] {
        &self.allowed
    }

    pub fn set_allowed(&mut self, allowed: Vec<bool>) -> Result<()> {
        if allowed.len() != self.config.vocab_size || !allowed.iter().any(|&a| a) {
            return Err(Error::Invalid(
                "output mask must cover the vocabulary and allow at least one id".into(),
            ));
        }
        self.allowed = allowed;
        Ok(())
    }

    fn mask_rows<T: Scalar>(&self, rows: usize) -> Tensor<T> {
        let row: Vec<T> = self
            .allowed
            .iter()
            .map(|&a| if a { T::zero() } else { T::neg_infinity() })
            .collect();
        let data = (0..rows).flat_map(|_| row.iter().copied()).collect();
        Tensor::matrix(rows, self.allowed.len(), data).expect("sized")
    }

    /// Prompt ids clipped to what fits in front of `reserve` target positions.
    fn clip_prompt<'a>(&self, prompt: &'a [usize], reserve: usize) -> &'a [usize] {
        let room = match self.family {
            DecoderFamily::EncoderDecoder => self.config.max_len,
            DecoderFamily::DecoderOnly => self.config.max_len.saturating_sub(reserve),
        };
        &prompt[..prompt.len().min(room)]
    }

    /// Encoder states of the prompt; `None` for the decoder-only family.
    pub fn encode_prompt<T: Scalar>(&self, g: &mut Graph<'_, T>, prompt: &[usize]) -> Result<Option<Var>> {
        match &self.body {
            Body::EncoderDecoder { encoder, .. } => {
                let prompt = self.clip_prompt(prompt, 0);
                if prompt.is_empty() {
                    return Err(Error::Invalid("empty prompt".into()));
                }
                let x = self.embeddings.forward(g, prompt, 0)?;
                Ok(Some(encoder.forward(g, x, None)?))
            }
            Body::DecoderOnly { .. } => Ok(None),
        }
    }

    /// Hidden states `[len(inputs), d]` for decoder inputs, one per position.
    fn decoder_states<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        prompt: &[usize],
        memory: Option<Var>,
        inputs: &[usize],
    ) -> Result<Var> {
        match &self.body {
            Body::EncoderDecoder { layers, ln_final, .. } => {
                let memory = match memory {
                    Some(m) => m,
                    None => self
                        .encode_prompt(g, prompt)?
                        .expect("encoder-decoder has an encoder"),
                };
                let mut x = self.embeddings.forward(g, inputs, 0)?;
                let causal = attention_mask(inputs.len(), inputs.len(), true, None);
                for layer in layers {
                    x = layer.forward(g, x, memory, causal.as_ref())?;
                }
                ln_final.forward(g, x)
            }
            Body::DecoderOnly { stack } => {
                let prompt = self.clip_prompt(prompt, inputs.len());
                let mut seq = prompt.to_vec();
                seq.extend_from_slice(inputs);
                let x = self.embeddings.forward(g, &seq, 0)?;
                let causal = attention_mask(seq.len(), seq.len(), true, None);
                let h = stack.forward(g, x, causal.as_ref())?;
                g.slice_rows(h, prompt.len(), inputs.len())
            }
        }
    }

    /// Runs the decoder on `target[..n-1]` and scores `target[1..]`.
    pub fn decode_teacher_forced<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        prompt: &[usize],
        target: &[usize],
    ) -> Result<TeacherForced> {
        if target.len() < 2 {
            return Err(Error::Invalid(
                "target must contain BOS, at least one token and EOS".into(),
            ));
        }
        if target[0] != BOS || target[target.len() - 1] != EOS {
            return Err(Error::Invalid("target must start with BOS and end with EOS".into()));
        }
        if target.len() - 1 > self.config.max_len {
            return Err(Error::Invalid(format!(
                "target of {} tokens exceeds max length {}",
                target.len(),
                self.config.max_len
            )));
        }
        let inputs = &target[..target.len() - 1];
        let labels = &target[1..];
        let hidden = self.decoder_states(g, prompt, None, inputs)?;
        let logits = self.head.forward(g, hidden)?;
        let mask = self.mask_rows(inputs.len());
        let logits = g.add_const(logits, &mask)?;
        let loss = g.cross_entropy(logits, labels)?;
        let pooled = g.mean_pool(hidden)?;
        Ok(TeacherForced {
            logits,
            hidden,
            pooled,
            loss,
            steps: labels.len(),
        })
    }

    /// Next-token log-probabilities after `prefix` (which starts with BOS), given precomputed
    /// encoder states.
    pub fn next_log_probs<T: Scalar>(
        &self,
        store: &ParamStore<T>,
        prompt: &[usize],
        memory: Option<&Tensor<T>>,
        prefix: &[usize],
    ) -> Result<Vec<f64>> {
        let mut g = Graph::inference(store);
        let mem = memory.map(|m| g.constant(m.clone()));
        let hidden = self.decoder_states(&mut g, prompt, mem, prefix)?;
        let last = g.slice_rows(hidden, prefix.len() - 1, 1)?;
        let logits = self.head.forward(&mut g, last)?;
        let mask = self.mask_rows(1);
        let logits = g.add_const(logits, &mask)?;
        Ok(log_softmax_rows(g.value(logits)).to_f64())
    }
}

/// Blocks ids that never belong in an explanation. UNK stays allowed so held-out targets with
/// unseen words keep a finite likelihood.
pub fn default_allowed(vocab_size: usize) -> Vec<bool> {
    (0..vocab_size)
        .map(|i| ![PAD, BOS, SEP, CLS].contains(&i))
        .collect()
}
