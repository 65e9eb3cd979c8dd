use serde::{Deserialize, Serialize};

use super::ngram::mean;
use super::EvalPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

/// Word error rate and its components, each divided by the reference length.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WerScores {
    pub wer: f64,
    pub deletion: f64,
    pub insertion: f64,
    pub substitution: f64,
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = (diag + usize::from(x != y)).min(up + 1).min(row[j] + 1);
            diag = up;
        }
    }
    row[b.len()]
}

/// Edit operations turning `cand` into `reference` along a minimum-cost alignment.
///
/// Among minimum-cost alignments the one with the most substitutions wins. Since the cost is
/// `S + D + I` and `I - D` is fixed by the two lengths, this pins down every component.
pub fn edit_counts(cand: &[String], reference: &[String]) -> EditCounts {
    let (n, m) = (cand.len(), reference.len());
    // (cost, substitutions) per cell, minimizing cost and then maximizing substitutions.
    let better = |a: (usize, usize), b: (usize, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 > b.1);
    let mut d = vec![vec![(0usize, 0usize); m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = (i, 0);
    }
    for j in 0..=m {
        d[0][j] = (j, 0);
    }
    for i in 1..=n {
        for j in 1..=m {
            let (c, s) = d[i - 1][j - 1];
            let mut best = if cand[i - 1] == reference[j - 1] { (c, s) } else { (c + 1, s + 1) };
            for alt in [(d[i - 1][j].0 + 1, d[i - 1][j].1), (d[i][j - 1].0 + 1, d[i][j - 1].1)] {
                if better(alt, best) {
                    best = alt;
                }
            }
            d[i][j] = best;
        }
    }
    let (cost, substitutions) = d[n][m];
    // I - D = n - m and S + D + I = cost.
    let rest = cost - substitutions;
    let insertions = ((rest + n) - m) / 2;
    let deletions = rest - insertions;
    EditCounts {
        substitutions,
        deletions,
        insertions,
    }
}

fn scores(c: EditCounts, ref_len: usize) -> WerScores {
    let denom = ref_len.max(1) as f64;
    WerScores {
        wer: c.total() as f64 / denom,
        deletion: c.deletions as f64 / denom,
        insertion: c.insertions as f64 / denom,
        substitution: c.substitutions as f64 / denom,
    }
}

/// Scores against the reference with the lowest WER; ties keep the earlier reference.
pub fn wer_decomposed(pair: &EvalPair) -> WerScores {
    let mut best: Option<WerScores> = None;
    for r in &pair.references {
        let s = scores(edit_counts(&pair.candidate, r), r.len());
        if best.is_none_or(|b| s.wer < b.wer) {
            best = Some(s);
        }
    }
    best.unwrap_or_default()
}

pub fn wer_corpus(corpus: &[EvalPair]) -> WerScores {
    let all: Vec<WerScores> = corpus.iter().map(wer_decomposed).collect();
    WerScores {
        wer: mean(all.iter().map(|s| s.wer)),
        deletion: mean(all.iter().map(|s| s.deletion)),
        insertion: mean(all.iter().map(|s| s.insertion)),
        substitution: mean(all.iter().map(|s| s.substitution)),
    }
}
