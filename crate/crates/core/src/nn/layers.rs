//! Transformer building blocks. Every block owns [`ParamId`]s into a shared store and records its
//! forward pass on a caller-supplied [`Graph`].

use rand::Rng;

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

pub const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d_in: usize,
        d_out: usize,
        rng: &mut R,
    ) -> Self {
        Linear {
            w: store.add_xavier(format!("{name}.w"), d_in, d_out, rng),
            b: store.add_zeros(format!("{name}.b"), &[d_out]),
            d_in,
            d_out,
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let b = g.param(self.b);
        let y = g.matmul(x, w)?;
        g.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, name: &str, d: usize) -> Self {
        LayerNorm {
            gain: store.add_ones(format!("{name}.gain"), &[d]),
            bias: store.add_zeros(format!("{name}.bias"), &[d]),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias, T::lit(LN_EPS))
    }
}

/// Additive attention mask: `0` where attention is allowed, `-inf` where it is blocked.
pub fn attention_mask<T: Scalar>(
    n_query: usize,
    n_key: usize,
    causal: bool,
    key_blocked: Option<&[bool]>,
) -> Option<Tensor<T>> {
    let any_blocked = key_blocked.is_some_and(|b| b.iter().any(|&x| x));
    if !causal && !any_blocked {
        return None;
    }
    let mut data = vec![T::zero(); n_query * n_key];
    for i in 0..n_query {
        for j in 0..n_key {
            let blocked = (causal && j > i) || key_blocked.is_some_and(|b| b[j]);
            if blocked {
                data[i * n_key + j] = T::neg_infinity();
            }
        }
    }
    Some(Tensor::matrix(n_query, n_key, data).expect("sized"))
}

#[derive(Debug, Clone, Copy)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub n_heads: usize,
}

impl MultiHeadAttention {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        n_heads: usize,
        rng: &mut R,
    ) -> Self {
        MultiHeadAttention {
            q: Linear::new(store, &format!("{name}.q"), d, d, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, rng),
            o: Linear::new(store, &format!("{name}.o"), d, d, rng),
            n_heads,
        }
    }

    /// Scaled dot-product attention of `query` rows over `memory` rows.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        query: Var,
        memory: Var,
        mask: Option<&Tensor<T>>,
    ) -> Result<Var> {
        let q = self.q.forward(g, query)?;
        let k = self.k.forward(g, memory)?;
        let v = self.v.forward(g, memory)?;
        let d = self.q.d_out;
        let hd = d / self.n_heads;
        let scale = T::one() / T::lit(hd as f64).sqrt();
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = g.slice_cols(q, h * hd, hd)?;
            let kh = g.slice_cols(k, h * hd, hd)?;
            let vh = g.slice_cols(v, h * hd, hd)?;
            let scores = g.matmul_bt(qh, kh)?;
            let mut scores = g.scale(scores, scale);
            if let Some(m) = mask {
                scores = g.add_const(scores, m)?;
            }
            let attn = g.softmax(scores);
            heads.push(g.matmul(attn, vh)?);
        }
        let cat = if heads.len() == 1 {
            heads[0]
        } else {
            g.concat_cols(&heads)?
        };
        self.o.forward(g, cat)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        width: usize,
        rng: &mut R,
    ) -> Self {
        FeedForward {
            up: Linear::new(store, &format!("{name}.up"), d, width, rng),
            down: Linear::new(store, &format!("{name}.down"), width, d, rng),
        }
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, x: Var) -> Result<Var> {
        let h = self.up.forward(g, x)?;
        let h = g.gelu(h);
        self.down.forward(g, h)
    }
}

/// Pre-norm self-attention layer.
#[derive(Debug, Clone, Copy)]
pub struct EncoderLayer {
    pub ln_attn: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderLayer {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        n_heads: usize,
        ffn_width: usize,
        rng: &mut R,
    ) -> Self {
        EncoderLayer {
            ln_attn: LayerNorm::new(store, &format!("{name}.ln_attn"), d),
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), d, n_heads, rng),
            ln_ffn: LayerNorm::new(store, &format!("{name}.ln_ffn"), d),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), d, ffn_width, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        mask: Option<&Tensor<T>>,
    ) -> Result<Var> {
        let h = self.ln_attn.forward(g, x)?;
        let a = self.attn.forward(g, h, h, mask)?;
        let x = g.add(x, a)?;
        let h = self.ln_ffn.forward(g, x)?;
        let f = self.ffn.forward(g, h)?;
        g.add(x, f)
    }
}

/// Pre-norm layer with causal self-attention and cross-attention over an encoder memory.
#[derive(Debug, Clone, Copy)]
pub struct DecoderLayer {
    pub ln_self: LayerNorm,
    pub self_attn: MultiHeadAttention,
    pub ln_cross: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub ln_ffn: LayerNorm,
    pub ffn: FeedForward,
}

impl DecoderLayer {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        n_heads: usize,
        ffn_width: usize,
        rng: &mut R,
    ) -> Self {
        DecoderLayer {
            ln_self: LayerNorm::new(store, &format!("{name}.ln_self"), d),
            self_attn: MultiHeadAttention::new(store, &format!("{name}.self_attn"), d, n_heads, rng),
            ln_cross: LayerNorm::new(store, &format!("{name}.ln_cross"), d),
            cross_attn: MultiHeadAttention::new(
                store,
                &format!("{name}.cross_attn"),
                d,
                n_heads,
                rng,
            ),
            ln_ffn: LayerNorm::new(store, &format!("{name}.ln_ffn"), d),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), d, ffn_width, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        x: Var,
        memory: Var,
        causal: Option<&Tensor<T>>,
    ) -> Result<Var> {
        let h = self.ln_self.forward(g, x)?;
        let a = self.self_attn.forward(g, h, h, causal)?;
        let x = g.add(x, a)?;
        let h = self.ln_cross.forward(g, x)?;
        let c = self.cross_attn.forward(g, h, memory, None)?;
        let x = g.add(x, c)?;
        let h = self.ln_ffn.forward(g, x)?;
        let f = self.ffn.forward(g, h)?;
        g.add(x, f)
    }
}

/// Stack of encoder layers followed by a final layer norm.
#[derive(Debug, Clone)]
pub struct EncoderStack {
    pub layers: Vec<EncoderLayer>,
    pub ln_final: LayerNorm,
}

impl EncoderStack {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        d: usize,
        n_layers: usize,
        n_heads: usize,
        ffn_width: usize,
        rng: &mut R,
    ) -> Self {
        EncoderStack {
            layers: (0..n_layers)
                .map(|i| {
                    EncoderLayer::new(store, &format!("{name}.layer{i}"), d, n_heads, ffn_width, rng)
                })
                .collect(),
            ln_final: LayerNorm::new(store, &format!("{name}.ln_final"), d),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<'_, T>,
        mut x: Var,
        mask: Option<&Tensor<T>>,
    ) -> Result<Var> {
        for layer in &self.layers {
            x = layer.forward(g, x, mask)?;
        }
        self.ln_final.forward(g, x)
    }
}

/// Token embeddings plus learned absolute positions.
#[derive(Debug, Clone, Copy)]
pub struct Embeddings {
    pub tokens: ParamId,
    pub positions: ParamId,
    pub max_len: usize,
}

impl Embeddings {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        name: &str,
        vocab_size: usize,
        max_len: usize,
        d: usize,
        rng: &mut R,
    ) -> Self {
        Embeddings {
            tokens: store.add_xavier(format!("{name}.tokens"), vocab_size, d, rng),
            positions: store.add_xavier(format!("{name}.positions"), max_len, d, rng),
            max_len,
        }
    }

    /// Embeds `ids` placed at positions `offset..offset + ids.len()`.
    pub fn forward<T: Scalar>(&self, g: &mut Graph<'_, T>, ids: &[usize], offset: usize) -> Result<Var> {
        if offset + ids.len() > self.max_len {
            return Err(crate::Error::Invalid(format!(
                "sequence of {} tokens at offset {offset} exceeds max length {}",
                ids.len(),
                self.max_len
            )));
        }
        let table = g.param(self.tokens);
        let tok = g.embedding(table, ids)?;
        let pos_table = g.param(self.positions);
        let positions: Vec<usize> = (offset..offset + ids.len()).collect();
        let pos = g.embedding(pos_table, &positions)?;
        g.add(tok, pos)
    }
}
