use super::ngram::{f_beta, mean};
use super::EvalPair;

pub const ROUGE_BETA: f64 = 1.2;

/// Longest common subsequence length, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

fn rouge_single(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let l = lcs_len(cand, reference);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / cand.len() as f64;
    let r = l as f64 / reference.len() as f64;
    f_beta(p, r, ROUGE_BETA)
}

pub fn rouge_l(pair: &EvalPair) -> f64 {
    pair.references
        .iter()
        .map(|r| rouge_single(&pair.candidate, r))
        .fold(0.0, f64::max)
}

pub fn rouge_l_corpus(corpus: &[EvalPair]) -> f64 {
    mean(corpus.iter().map(rouge_l))
}
