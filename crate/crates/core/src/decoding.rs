//! Free-running generation: greedy and length-normalized beam search over any next-token scorer.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::data::{BOS, EOS};
use crate::error::{Error, Result};
use crate::nn::PromptedGenerator;
use crate::scalar::Scalar;
use crate::tensor::{Graph, ParamStore, Tensor};

/// Source of next-token log-probabilities. `prefix` always starts with BOS.
pub trait StepScorer {
    fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>>;
}

impl<F: FnMut(&[usize]) -> Vec<f64>> StepScorer for F {
    fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
        Ok(self(prefix))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Beam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub k: usize,
    /// Maximum number of generated tokens, EOS included.
    pub max_len: usize,
    /// Length-normalization exponent.
    pub alpha: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            strategy: Strategy::Greedy,
            k: 4,
            max_len: 32,
            alpha: 0.7,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.max_len == 0 {
            return Err(Error::Config(
                "beam width and max length must be at least 1".into(),
            ));
        }
        if !self.alpha.is_finite() {
            return Err(Error::Config("alpha must be finite".into()));
        }
        Ok(())
    }
}

/// Generated ids after BOS. `finished` means the last id is EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub ids: Vec<usize>,
    pub log_prob: f64,
    pub finished: bool,
}

impl Hypothesis {
    /// Ids without the closing EOS.
    pub fn content(&self) -> &[usize] {
        if self.finished {
            &self.ids[..self.ids.len() - 1]
        } else {
            &self.ids
        }
    }

    /// `log_prob / len^alpha`, where len counts generated ids.
    pub fn normalized(&self, alpha: f64) -> f64 {
        let len = self.ids.len().max(1) as f64;
        self.log_prob / len.powf(alpha)
    }
}

fn with_bos(ids: &[usize]) -> Vec<usize> {
    let mut p = Vec::with_capacity(ids.len() + 1);
    p.push(BOS);
    p.extend_from_slice(ids);
    p
}

/// Arg-max continuation until EOS or `max_len`; ties go to the lowest id.
pub fn greedy_decode(scorer: &mut dyn StepScorer, max_len: usize) -> Result<Hypothesis> {
    let mut hyp = Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        finished: false,
    };
    while hyp.ids.len() < max_len {
        let lp = scorer.log_probs(&with_bos(&hyp.ids))?;
        let mut best = None::<(usize, f64)>;
        for (id, &v) in lp.iter().enumerate() {
            if v.is_nan() || v == f64::NEG_INFINITY {
                continue;
            }
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((id, v));
            }
        }
        let (id, v) = best.ok_or_else(|| Error::Invalid("scorer allows no token".into()))?;
        hyp.ids.push(id);
        hyp.log_prob += v;
        if id == EOS {
            hyp.finished = true;
            break;
        }
    }
    Ok(hyp)
}

fn rank(a: &Hypothesis, b: &Hypothesis, alpha: f64) -> Ordering {
    b.normalized(alpha)
        .partial_cmp(&a.normalized(alpha))
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.ids.cmp(&b.ids))
}

/// Beam search over `k` hypotheses ranked by [`Hypothesis::normalized`]. Finished hypotheses keep
/// their slot and compete with open ones; search stops when every slot is finished or the length
/// limit is reached.
///
/// Plain beam search is not monotone in `k`: the greedy path can be pruned early and the survivors
/// can end worse than it. The greedy hypothesis therefore joins the final ranking, so a wider beam
/// never returns a lower-scoring sequence than `k = 1`.
pub fn beam_decode(scorer: &mut dyn StepScorer, k: usize, max_len: usize, alpha: f64) -> Result<Hypothesis> {
    let mut beam = vec![Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        finished: false,
    }];
    for _ in 0..max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let mut pool = Vec::new();
        for h in beam {
            if h.finished {
                pool.push(h);
                continue;
            }
            let lp = scorer.log_probs(&with_bos(&h.ids))?;
            for (id, &v) in lp.iter().enumerate() {
                if v.is_nan() || v == f64::NEG_INFINITY {
                    continue;
                }
                let mut ids = h.ids.clone();
                ids.push(id);
                pool.push(Hypothesis {
                    ids,
                    log_prob: h.log_prob + v,
                    finished: id == EOS,
                });
            }
        }
        if pool.is_empty() {
            return Err(Error::Invalid("scorer allows no token".into()));
        }
        pool.sort_by(|a, b| rank(a, b, alpha));
        pool.truncate(k);
        beam = pool;
    }
    if k > 1 {
        beam.push(greedy_decode(scorer, max_len)?);
    }
    beam.sort_by(|a, b| rank(a, b, alpha));
    Ok(beam.swap_remove(0))
}

pub fn decode(scorer: &mut dyn StepScorer, cfg: &DecodeConfig) -> Result<Hypothesis> {
    cfg.validate()?;
    match cfg.strategy {
        Strategy::Greedy => greedy_decode(scorer, cfg.max_len),
        Strategy::Beam => beam_decode(scorer, cfg.k, cfg.max_len, cfg.alpha),
    }
}

/// Scorer backed by a generator with the prompt encoded once.
pub struct GeneratorScorer<'a, T: Scalar> {
    generator: &'a PromptedGenerator,
    store: &'a ParamStore<T>,
    prompt: Vec<usize>,
    memory: Option<Tensor<T>>,
}

impl<'a, T: Scalar> GeneratorScorer<'a, T> {
    pub fn new(generator: &'a PromptedGenerator, store: &'a ParamStore<T>, prompt: &[usize]) -> Result<Self> {
        let memory = {
            let mut g = Graph::inference(store);
            generator
                .encode_prompt(&mut g, prompt)?
                .map(|m| g.value(m).clone())
        };
        Ok(GeneratorScorer {
            generator,
            store,
            prompt: prompt.to_vec(),
            memory,
        })
    }

    /// Longest generation that still fits the generator's position table.
    pub fn max_steps(&self) -> usize {
        let cap = self.generator.config.max_len;
        match self.memory {
            Some(_) => cap,
            None => cap.saturating_sub(self.prompt.len().min(cap - 1)),
        }
    }
}

impl<T: Scalar> StepScorer for GeneratorScorer<'_, T> {
    fn log_probs(&mut self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.generator
            .next_log_probs(self.store, &self.prompt, self.memory.as_ref(), prefix)
    }
}

/// Decodes one prompt with a generator, clamping the length limit to its position table.
pub fn generate<T: Scalar>(
    generator: &PromptedGenerator,
    store: &ParamStore<T>,
    prompt: &[usize],
    cfg: &DecodeConfig,
) -> Result<Hypothesis> {
    let mut scorer = GeneratorScorer::new(generator, store, prompt)?;
    let cfg = DecodeConfig {
        max_len: cfg.max_len.min(scorer.max_steps()).max(1),
        ..*cfg
    };
    decode(&mut scorer, &cfg)
}
