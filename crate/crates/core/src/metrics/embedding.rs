use std::collections::{HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::ngram::mean;
use super::EvalPair;
use crate::data::{Vocabulary, UNK};
use crate::model::Lumen;
use crate::scalar::Scalar;

/// Deterministic token and sentence vectors of a fixed width.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;

    fn token_vector(&self, token: &str) -> Vec<f64>;

    fn token_vectors(&self, tokens: &[String]) -> Vec<Vec<f64>> {
        tokens.iter().map(|t| self.token_vector(t)).collect()
    }

    /// Mean of the token vectors; the zero vector for an empty sentence.
    fn sentence_vector(&self, tokens: &[String]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for v in self.token_vectors(tokens) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += x;
            }
        }
        if !tokens.is_empty() {
            for o in &mut out {
                *o /= tokens.len() as f64;
            }
        }
        out
    }
}

/// Random unit vector per token type, keyed by a hash of `(seed, token)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbeddings {
    pub dim: usize,
    pub seed: u64,
}

impl Default for HashEmbeddings {
    fn default() -> Self {
        HashEmbeddings { dim: 64, seed: 0 }
    }
}

impl EmbeddingProvider for HashEmbeddings {
    fn dim(&self) -> usize {
        self.dim
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(token.as_bytes());
        let digest = h.finalize();
        let key: [u8; 32] = digest.into();
        let mut rng = ChaCha8Rng::from_seed(key);
        let mut v: Vec<f64> = (0..self.dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        v
    }
}

/// Rows of a trained generator's token embedding table; unknown words use the `[UNK]` row.
#[derive(Debug, Clone)]
pub struct ModelEmbeddings {
    vocab: Vocabulary,
    rows: Vec<Vec<f64>>,
}

impl ModelEmbeddings {
    pub fn new(vocab: Vocabulary, rows: Vec<Vec<f64>>) -> Self {
        ModelEmbeddings { vocab, rows }
    }

    pub fn from_model<T: Scalar>(model: &Lumen<T>, vocab: &Vocabulary) -> Self {
        let table = model.store.get(model.generator.embeddings.tokens);
        let rows = (0..table.rows())
            .map(|i| table.row(i).iter().map(|x| x.to_f64_lossy()).collect())
            .collect();
        ModelEmbeddings::new(vocab.clone(), rows)
    }
}

impl EmbeddingProvider for ModelEmbeddings {
    fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn token_vector(&self, token: &str) -> Vec<f64> {
        let id = self.vocab.id(token);
        self.rows.get(id).unwrap_or(&self.rows[UNK]).clone()
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// `ln((M + 1) / (df + 1))` over the `M` reference sets; unseen words get `ln(M + 1)`.
#[derive(Debug, Clone)]
pub struct IdfTable {
    sets: usize,
    df: HashMap<String, usize>,
}

impl IdfTable {
    pub fn from_corpus(corpus: &[EvalPair]) -> Self {
        let mut df = HashMap::new();
        for pair in corpus {
            let seen: HashSet<&String> = pair.references.iter().flatten().collect();
            for w in seen {
                *df.entry(w.clone()).or_insert(0) += 1;
            }
        }
        IdfTable {
            sets: corpus.len(),
            df,
        }
    }

    pub fn idf(&self, word: &str) -> f64 {
        let df = self.df.get(word).copied().unwrap_or(0);
        ((self.sets + 1) as f64 / (df + 1) as f64).ln()
    }

    /// Idf weights of `tokens`, or uniform weights when they would all be zero.
    pub fn weights(&self, tokens: &[String]) -> Vec<f64> {
        let w: Vec<f64> = tokens.iter().map(|t| self.idf(t)).collect();
        if w.iter().sum::<f64>() > 0.0 {
            w
        } else {
            vec![1.0; tokens.len()]
        }
    }
}

/// Idf-weighted mean over `from` of each token's best cosine against `to`, floored at zero.
fn greedy_side(from: &[Vec<f64>], weights: &[f64], to: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (v, &w) in from.iter().zip(weights) {
        let best = to.iter().map(|u| cosine(v, u)).fold(0.0, f64::max);
        num += w * best;
        den += w;
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Precision, recall and F of greedy cosine matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BertScore {
    pub precision: f64,
    pub recall: f64,
    pub f: f64,
}

fn bertscore_single(cand: &[String], reference: &[String], emb: &dyn EmbeddingProvider, idf: &IdfTable) -> BertScore {
    if cand.is_empty() || reference.is_empty() {
        let same = cand.is_empty() && reference.is_empty();
        let v = if same { 1.0 } else { 0.0 };
        return BertScore {
            precision: v,
            recall: v,
            f: v,
        };
    }
    let cv = emb.token_vectors(cand);
    let rv = emb.token_vectors(reference);
    let precision = greedy_side(&cv, &idf.weights(cand), &rv);
    let recall = greedy_side(&rv, &idf.weights(reference), &cv);
    let f = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    BertScore { precision, recall, f }
}

/// Best-F reference.
pub fn bertscore(pair: &EvalPair, emb: &dyn EmbeddingProvider, idf: &IdfTable) -> BertScore {
    pair.references
        .iter()
        .map(|r| bertscore_single(&pair.candidate, r, emb, idf))
        .fold(None::<BertScore>, |best, s| match best {
            Some(b) if b.f >= s.f => Some(b),
            _ => Some(s),
        })
        .expect("references are non-empty")
}

pub fn bertscore_corpus(corpus: &[EvalPair], emb: &dyn EmbeddingProvider) -> f64 {
    let idf = IdfTable::from_corpus(corpus);
    mean(corpus.iter().map(|p| bertscore(p, emb, &idf).f))
}

fn laser_single(cand: &[String], reference: &[String], emb: &dyn EmbeddingProvider) -> f64 {
    if cand.is_empty() || reference.is_empty() {
        return if cand.is_empty() && reference.is_empty() { 1.0 } else { 0.0 };
    }
    let c = emb.sentence_vector(cand);
    let r = emb.sentence_vector(reference);
    (cosine(&c, &r) + 1.0) / 2.0
}

/// Sentence-vector cosine mapped to `[0, 1]`.
pub fn laser_sim(pair: &EvalPair, emb: &dyn EmbeddingProvider) -> f64 {
    pair.references
        .iter()
        .map(|r| laser_single(&pair.candidate, r, emb))
        .fold(0.0, f64::max)
}

pub fn laser_corpus(corpus: &[EvalPair], emb: &dyn EmbeddingProvider) -> f64 {
    mean(corpus.iter().map(|p| laser_sim(p, emb)))
}
