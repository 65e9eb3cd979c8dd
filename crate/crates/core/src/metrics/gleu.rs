use super::ngram::{mean, ngrams, overlap, total};
use super::EvalPair;

/// Sentence GLEU: n-grams of orders 1 to 4 pooled into one multiset per side.
fn gleu_single(cand: &[String], reference: &[String]) -> f64 {
    let (mut matched, mut nc, mut nr) = (0, 0, 0);
    for n in 1..=4 {
        let c = ngrams(cand, n);
        let r = ngrams(reference, n);
        matched += overlap(&c, &r);
        nc += total(&c);
        nr += total(&r);
    }
    if nc == 0 && nr == 0 {
        return 1.0;
    }
    if nc == 0 || nr == 0 {
        return 0.0;
    }
    (matched as f64 / nc as f64).min(matched as f64 / nr as f64)
}

pub fn gleu(pair: &EvalPair) -> f64 {
    pair.references
        .iter()
        .map(|r| gleu_single(&pair.candidate, r))
        .fold(0.0, f64::max)
}

pub fn gleu_corpus(corpus: &[EvalPair]) -> f64 {
    mean(corpus.iter().map(gleu))
}
