use super::ngram::{ngrams, total};
use super::EvalPair;
use crate::error::{Error, Result};

/// Corpus BLEU for orders 1 to 4 plus the brevity penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BleuScores {
    /// `b[n-1]` is cumulative BLEU up to order `n`, brevity penalty included.
    pub b: [f64; 4],
    pub bp: f64,
    pub precisions: [f64; 4],
}

/// Matched and total candidate `n`-grams over the corpus.
///
/// With `clip`, each candidate n-gram count is capped by its largest count in any single reference.
/// Without it, every candidate n-gram that appears in some reference counts in full.
pub fn ngram_precision(corpus: &[EvalPair], n: usize, clip: bool) -> (usize, usize) {
    let mut matched = 0;
    let mut all = 0;
    for pair in corpus {
        let cand = ngrams(&pair.candidate, n);
        let refs: Vec<_> = pair.references.iter().map(|r| ngrams(r, n)).collect();
        for (g, &c) in &cand {
            let cap = refs.iter().map(|r| r.get(g).copied().unwrap_or(0)).max().unwrap_or(0);
            matched += if clip { c.min(cap) } else if cap > 0 { c } else { 0 };
        }
        all += total(&cand);
    }
    (matched, all)
}

/// Reference length closest to `c`; ties go to the shorter reference.
fn closest_ref_len(c: usize, refs: &[Vec<String>]) -> usize {
    refs.iter()
        .map(Vec::len)
        .min_by_key(|&r| (r.abs_diff(c), r))
        .unwrap_or(0)
}

pub fn brevity_penalty(c: usize, r: usize) -> f64 {
    if c > r {
        1.0
    } else if c == 0 {
        if r == 0 {
            1.0
        } else {
            0.0
        }
    } else {
        (1.0 - r as f64 / c as f64).exp()
    }
}

/// Corpus-level BLEU.
///
/// Orders for which the corpus has no candidate n-grams are left out of the geometric mean, so
/// short but exact candidates still score 1. A corpus with no candidate tokens scores 1 only
/// against empty references.
pub fn bleu_suite(corpus: &[EvalPair]) -> Result<BleuScores> {
    if corpus.is_empty() {
        return Err(Error::Invalid("BLEU needs a non-empty corpus".into()));
    }
    let c: usize = corpus.iter().map(|p| p.candidate.len()).sum();
    let r: usize = corpus
        .iter()
        .map(|p| closest_ref_len(p.candidate.len(), &p.references))
        .sum();
    let bp = brevity_penalty(c, r);

    let mut precisions = [0.0; 4];
    let mut b = [0.0; 4];
    let mut log_sum = 0.0;
    let mut orders = 0;
    let mut zero = false;
    for n in 1..=4 {
        let (m, t) = ngram_precision(corpus, n, true);
        if t > 0 {
            let p = m as f64 / t as f64;
            precisions[n - 1] = p;
            orders += 1;
            if m == 0 {
                zero = true;
            } else {
                log_sum += p.ln();
            }
        }
        b[n - 1] = if zero {
            0.0
        } else if orders == 0 {
            bp
        } else {
            bp * (log_sum / orders as f64).exp()
        };
    }
    Ok(BleuScores { b, bp, precisions })
}
