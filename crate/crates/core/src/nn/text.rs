use rand::Rng;

use super::config::BlockConfig;
use super::layers::{attention_mask, Embeddings, EncoderStack};
use crate::data::{SequencePairInput, PAD};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamStore, Var};

/// Encoder over `[CLS] A [SEP] B [SEP]` with token, position and segment embeddings.
#[derive(Debug, Clone)]
pub struct TextPairEncoder {
    pub config: BlockConfig,
    pub embeddings: Embeddings,
    pub segments: ParamId,
    pub stack: EncoderStack,
}

/// Encoder output: per-position hidden states and their pooled vector.
#[derive(Debug, Clone, Copy)]
pub struct PairEncoding {
    pub hidden: Var,
    pub pooled: Var,
    pub truncated: bool,
}

impl TextPairEncoder {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        config: BlockConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        Ok(TextPairEncoder {
            config,
            embeddings: Embeddings::new(
                store,
                &format!("{name}.embed"),
                config.vocab_size,
                config.max_len,
                d,
                rng,
            ),
            segments: store.add_xavier(format!("{name}.segments"), 2, d, rng),
            stack: EncoderStack::new(
                store,
                &format!("{name}.stack"),
                d,
                config.n_layers,
                config.n_heads,
                config.ffn_width,
                rng,
            ),
        })
    }

    /// Hidden states `[L, d]` and their mean over non-PAD positions. Inputs longer than the
    /// configured maximum are truncated and flagged.
    pub fn encode_pair<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        input: &SequencePairInput,
    ) -> Result<PairEncoding> {
        let (input, truncated) = input.truncated(self.config.max_len);
        let ids = &input.ids;
        let tok = self.embeddings.forward(g, ids, 0)?;
        let seg_ids: Vec<usize> = (0..ids.len())
            .map(|i| usize::from(i >= input.a_len + 2))
            .collect();
        let seg_table = g.param(self.segments);
        let seg = g.embedding(seg_table, &seg_ids)?;
        let x = g.add(tok, seg)?;
        let blocked: Vec<bool> = ids.iter().map(|&t| t == PAD).collect();
        let mask = attention_mask(ids.len(), ids.len(), false, Some(&blocked));
        let hidden = self.stack.forward(g, x, mask.as_ref())?;
        let keep: Vec<usize> = (0..ids.len()).filter(|&i| !blocked[i]).collect();
        let pooled = g.mean_pool_rows(hidden, &keep)?;
        Ok(PairEncoding {
            hidden,
            pooled,
            truncated,
        })
    }
}
