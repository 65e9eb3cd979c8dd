use super::ngram::{f_beta, mean, ngrams, overlap, total};
use super::EvalPair;

pub const CHRF_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

/// Characters of the sentence with all whitespace removed.
fn chars(tokens: &[String]) -> Vec<char> {
    tokens.iter().flat_map(|t| t.chars()).filter(|c| !c.is_whitespace()).collect()
}

/// Character n-gram F-score. Precision and recall are averaged over the orders present on both
/// sides before combining.
fn chrf_single(cand: &[String], reference: &[String]) -> f64 {
    let c = chars(cand);
    let r = chars(reference);
    if c.is_empty() && r.is_empty() {
        return 1.0;
    }
    let (mut p_sum, mut r_sum, mut orders) = (0.0, 0.0, 0);
    for n in 1..=CHRF_ORDER {
        let cg = ngrams(&c, n);
        let rg = ngrams(&r, n);
        let (tc, tr) = (total(&cg), total(&rg));
        if tc == 0 || tr == 0 {
            continue;
        }
        let m = overlap(&cg, &rg) as f64;
        p_sum += m / tc as f64;
        r_sum += m / tr as f64;
        orders += 1;
    }
    if orders == 0 {
        return 0.0;
    }
    f_beta(p_sum / orders as f64, r_sum / orders as f64, CHRF_BETA)
}

pub fn chrf(pair: &EvalPair) -> f64 {
    pair.references
        .iter()
        .map(|r| chrf_single(&pair.candidate, r))
        .fold(0.0, f64::max)
}

pub fn chrf_corpus(corpus: &[EvalPair]) -> f64 {
    mean(corpus.iter().map(chrf))
}
