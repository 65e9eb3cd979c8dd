use super::ngram::mean;
use super::EvalPair;

pub const RIBES_ALPHA: f64 = 0.25;

fn count_span(seq: &[String], span: &[String]) -> usize {
    if span.len() > seq.len() {
        return 0;
    }
    seq.windows(span.len()).filter(|w| *w == span).count()
}

fn find_span(seq: &[String], span: &[String]) -> Option<usize> {
    seq.windows(span.len()).position(|w| w == span)
}

/// Reference positions of the aligned candidate words, in candidate order.
///
/// A word occurring once on both sides aligns directly. Otherwise the word is widened into the
/// shortest context (left context first, then right) that occurs once on both sides; the bigram is
/// the first context tried. A word still ambiguous after that pairs its k-th occurrence in the
/// candidate with the k-th occurrence in the reference. Links into a reference slot already taken
/// are dropped.
pub fn word_rank_alignment(cand: &[String], reference: &[String]) -> Vec<usize> {
    let mut used = vec![false; reference.len()];
    let mut order = Vec::new();
    for (i, w) in cand.iter().enumerate() {
        if !reference.contains(w) {
            continue;
        }
        let mut found = None;
        if count_span(cand, std::slice::from_ref(w)) == 1 && count_span(reference, std::slice::from_ref(w)) == 1 {
            found = find_span(reference, std::slice::from_ref(w));
        } else {
            for window in 1..cand.len() {
                if window <= i {
                    let span = &cand[i - window..=i];
                    if count_span(cand, span) == 1 && count_span(reference, span) == 1 {
                        found = find_span(reference, span).map(|p| p + window);
                        break;
                    }
                }
                if i + window < cand.len() {
                    let span = &cand[i..=i + window];
                    if count_span(cand, span) == 1 && count_span(reference, span) == 1 {
                        found = find_span(reference, span);
                        break;
                    }
                }
            }
            if found.is_none() {
                let k = cand[..i].iter().filter(|x| *x == w).count();
                found = reference.iter().enumerate().filter(|(_, x)| *x == w).nth(k).map(|(p, _)| p);
            }
        }
        if let Some(p) = found {
            if !used[p] {
                used[p] = true;
                order.push(p);
            }
        }
    }
    order
}

/// `(τ + 1) / 2` over all pairs of aligned positions. A single aligned word counts as ordered.
pub fn normalized_kendall_tau(order: &[usize]) -> f64 {
    match order.len() {
        0 => 0.0,
        1 => 1.0,
        n => {
            let mut concordant = 0usize;
            for i in 0..n {
                for j in i + 1..n {
                    if order[i] < order[j] {
                        concordant += 1;
                    }
                }
            }
            let pairs = n * (n - 1) / 2;
            let tau = 2.0 * concordant as f64 / pairs as f64 - 1.0;
            (tau + 1.0) / 2.0
        }
    }
}

fn ribes_single(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() {
        return if reference.is_empty() { 1.0 } else { 0.0 };
    }
    let order = word_rank_alignment(cand, reference);
    let precision = order.len() as f64 / cand.len() as f64;
    normalized_kendall_tau(&order) * precision.powf(RIBES_ALPHA)
}

pub fn ribes(pair: &EvalPair) -> f64 {
    pair.references
        .iter()
        .map(|r| ribes_single(&pair.candidate, r))
        .fold(0.0, f64::max)
}

pub fn ribes_corpus(corpus: &[EvalPair]) -> f64 {
    mean(corpus.iter().map(ribes))
}
