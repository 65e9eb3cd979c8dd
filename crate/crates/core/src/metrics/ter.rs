use super::ngram::mean;
use super::wer::edit_distance;
use super::EvalPair;

/// Longest phrase a single shift may move.
pub const MAX_SHIFT_LEN: usize = 10;

/// Shift count and remaining edit distance after greedy block shifts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TerEdits {
    pub shifts: usize,
    pub edits: usize,
}

impl TerEdits {
    pub fn total(&self) -> usize {
        self.shifts + self.edits
    }
}

/// Moves `seq[start..start + len]` so that it begins at `dest` in the sequence without it.
pub fn apply_shift<T: Clone>(seq: &[T], start: usize, len: usize, dest: usize) -> Vec<T> {
    let mut rest: Vec<T> = seq[..start].to_vec();
    rest.extend_from_slice(&seq[start + len..]);
    let mut out = rest[..dest].to_vec();
    out.extend_from_slice(&seq[start..start + len]);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// Greedy shifting: at each round apply the shift that lowers the edit distance the most, until no
/// shift lowers it. Only phrases that occur in the reference are moved. Ties keep the first shift
/// in `(start, len, dest)` order.
pub fn ter_edits(cand: &[String], reference: &[String]) -> TerEdits {
    let mut hyp = cand.to_vec();
    let mut edits = edit_distance(&hyp, reference);
    let mut shifts = 0;
    while edits > 0 {
        let mut best: Option<(usize, Vec<String>)> = None;
        for start in 0..hyp.len() {
            for len in 1..=MAX_SHIFT_LEN.min(hyp.len() - start) {
                let phrase = &hyp[start..start + len];
                if !reference.windows(len).any(|w| w == phrase) {
                    continue;
                }
                for dest in 0..=hyp.len() - len {
                    if dest == start {
                        continue;
                    }
                    let moved = apply_shift(&hyp, start, len, dest);
                    let e = edit_distance(&moved, reference);
                    if e < edits && best.as_ref().is_none_or(|(b, _)| e < *b) {
                        best = Some((e, moved));
                    }
                }
            }
        }
        match best {
            Some((e, moved)) => {
                hyp = moved;
                edits = e;
                shifts += 1;
            }
            None => break,
        }
    }
    TerEdits { shifts, edits }
}

/// Lowest TER over the references.
pub fn ter(pair: &EvalPair) -> f64 {
    pair.references
        .iter()
        .map(|r| ter_edits(&pair.candidate, r).total() as f64 / r.len().max(1) as f64)
        .fold(f64::INFINITY, f64::min)
}

pub fn ter_corpus(corpus: &[EvalPair]) -> f64 {
    mean(corpus.iter().map(ter))
}
