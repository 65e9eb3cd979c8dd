use std::collections::{BTreeMap, BTreeSet};

use super::ngram::mean;
use super::EvalPair;

pub const CIDER_SIGMA: f64 = 6.0;

type Gram<'a> = &'a [String];

/// Ordered maps keep floating-point sums in a fixed order across processes.
struct Vector<'a> {
    weights: [BTreeMap<Gram<'a>, f64>; 4],
    norms: [f64; 4],
    /// Bigram count, which is what the reference toolkit uses as the length.
    length: f64,
}

fn counts(tokens: &[String]) -> BTreeMap<Gram<'_>, usize> {
    let mut c = BTreeMap::new();
    for n in 1..=4 {
        if tokens.len() >= n {
            for w in tokens.windows(n) {
                *c.entry(w).or_insert(0) += 1;
            }
        }
    }
    c
}

fn vectorize<'a>(c: &BTreeMap<Gram<'a>, usize>, df: &BTreeMap<Gram<'a>, usize>, log_n: f64) -> Vector<'a> {
    let mut v = Vector {
        weights: Default::default(),
        norms: [0.0; 4],
        length: 0.0,
    };
    for (&g, &tf) in c {
        let n = g.len() - 1;
        let idf = log_n - (df.get(g).copied().unwrap_or(0).max(1) as f64).ln();
        let w = tf as f64 * idf;
        v.weights[n].insert(g, w);
        v.norms[n] += w * w;
        if n == 1 {
            v.length += tf as f64;
        }
    }
    for x in &mut v.norms {
        *x = x.sqrt();
    }
    v
}

fn similarity(hyp: &Vector<'_>, reference: &Vector<'_>) -> [f64; 4] {
    let delta = hyp.length - reference.length;
    let gauss = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
    let mut out = [0.0; 4];
    for n in 0..4 {
        let mut val = 0.0;
        for (g, &wh) in &hyp.weights[n] {
            let wr = reference.weights[n].get(g).copied().unwrap_or(0.0);
            val += wh.min(wr) * wr;
        }
        if hyp.norms[n] != 0.0 && reference.norms[n] != 0.0 {
            val /= hyp.norms[n] * reference.norms[n];
        }
        out[n] = val * gauss;
    }
    out
}

/// Per-pair CIDEr-D with document frequencies taken over the reference sets of `corpus`.
pub fn cider_scores(corpus: &[EvalPair]) -> Vec<f64> {
    let ref_counts: Vec<Vec<_>> = corpus
        .iter()
        .map(|p| p.references.iter().map(|r| counts(r)).collect())
        .collect();
    let mut df: BTreeMap<Gram<'_>, usize> = BTreeMap::new();
    for refs in &ref_counts {
        let seen: BTreeSet<Gram<'_>> = refs.iter().flat_map(|c| c.keys().copied()).collect();
        for g in seen {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    let log_n = (corpus.len() as f64).ln();

    corpus
        .iter()
        .zip(&ref_counts)
        .map(|(pair, refs)| {
            let hyp = vectorize(&counts(&pair.candidate), &df, log_n);
            let mut acc = [0.0; 4];
            for r in refs {
                let s = similarity(&hyp, &vectorize(r, &df, log_n));
                for n in 0..4 {
                    acc[n] += s[n];
                }
            }
            let avg = acc.iter().sum::<f64>() / 4.0;
            avg / refs.len() as f64 * 10.0
        })
        .collect()
}

pub fn cider(corpus: &[EvalPair]) -> f64 {
    mean(cider_scores(corpus))
}
