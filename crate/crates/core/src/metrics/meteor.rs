use std::collections::HashMap;

use super::ngram::mean;
use super::EvalPair;

/// Suffix-stripping stemmer used by the second alignment stage. Stems keep at least three letters.
pub fn stem(word: &str) -> &str {
    const SUFFIXES: [&str; 8] = ["ingly", "edly", "ing", "ies", "ed", "es", "ly", "s"];
    for suf in SUFFIXES {
        if let Some(base) = word.strip_suffix(suf) {
            if base.chars().count() >= 3 && !base.ends_with('s') {
                return base;
            }
        }
    }
    word
}

/// Unigram alignment between candidate and reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Alignment {
    /// `(candidate position, reference position)` in candidate order.
    pub links: Vec<(usize, usize)>,
    pub chunks: usize,
}

/// Chunks are maximal runs of links adjacent in both sentences.
pub fn count_chunks(links: &[(usize, usize)]) -> usize {
    let mut sorted = links.to_vec();
    sorted.sort_unstable();
    let mut chunks = 0;
    for (i, &(c, r)) in sorted.iter().enumerate() {
        let continues = i > 0 && sorted[i - 1].0 + 1 == c && sorted[i - 1].1 + 1 == r;
        if !continues {
            chunks += 1;
        }
    }
    chunks
}

struct Search<'a> {
    cand: &'a [String],
    reference: &'a [String],
    cand_stems: Vec<&'a str>,
    ref_stems: Vec<&'a str>,
    exact_quota: HashMap<&'a str, usize>,
    stem_quota: HashMap<&'a str, usize>,
    /// Candidate positions of each word still to be visited, for feasibility pruning.
    remaining_word: HashMap<&'a str, usize>,
    remaining_stem: HashMap<&'a str, usize>,
    used: Vec<bool>,
    links: Vec<(usize, usize)>,
    best: Option<Alignment>,
    budget: usize,
}

impl Search<'_> {
    /// Tries every link for candidate position `i`, exact links first, then stem links, then none.
    fn run(&mut self, i: usize, chunks: usize) {
        if self.budget == 0 {
            return;
        }
        self.budget -= 1;
        if let Some(b) = &self.best {
            if chunks >= b.chunks {
                return;
            }
        }
        if i == self.cand.len() {
            if self.exact_quota.values().all(|&q| q == 0) && self.stem_quota.values().all(|&q| q == 0) {
                self.best = Some(Alignment {
                    links: self.links.clone(),
                    chunks,
                });
            }
            return;
        }
        let word = self.cand[i].as_str();
        let st = self.cand_stems[i];
        *self.remaining_word.get_mut(word).unwrap() -= 1;
        *self.remaining_stem.get_mut(st).unwrap() -= 1;

        let prev = self.links.last().copied();
        let extend = |r: usize| match prev {
            Some((pc, pr)) if pc + 1 == i && pr + 1 == r => 0,
            _ => 1,
        };

        if self.exact_quota.get(word).copied().unwrap_or(0) > 0 {
            *self.exact_quota.get_mut(word).unwrap() -= 1;
            let mut order: Vec<usize> = (0..self.reference.len())
                .filter(|&r| !self.used[r] && self.reference[r] == word)
                .collect();
            order.sort_by_key(|&r| extend(r));
            for r in order {
                self.take(i, r, chunks + extend(r));
            }
            *self.exact_quota.get_mut(word).unwrap() += 1;
        }
        // A stem link leaves enough later occurrences of `word` to fill its exact quota, and never
        // joins equal words.
        let eq = self.exact_quota.get(word).copied().unwrap_or(0);
        if self.stem_quota.get(st).copied().unwrap_or(0) > 0 && self.remaining_word[word] >= eq {
            *self.stem_quota.get_mut(st).unwrap() -= 1;
            let mut order: Vec<usize> = (0..self.reference.len())
                .filter(|&r| !self.used[r] && self.ref_stems[r] == st && self.reference[r] != word)
                .collect();
            order.sort_by_key(|&r| extend(r));
            for r in order {
                self.take(i, r, chunks + extend(r));
            }
            *self.stem_quota.get_mut(st).unwrap() += 1;
        }
        // Leaving `i` unlinked is allowed while the remaining positions can still fill the quotas.
        let exact_ok = self.exact_quota.get(word).copied().unwrap_or(0) <= self.remaining_word[word];
        let stem_ok = self.stem_quota.get(st).copied().unwrap_or(0) <= self.remaining_stem[st];
        if exact_ok && stem_ok {
            self.run(i + 1, chunks);
        }

        *self.remaining_word.get_mut(word).unwrap() += 1;
        *self.remaining_stem.get_mut(st).unwrap() += 1;
    }

    fn take(&mut self, i: usize, r: usize, chunks: usize) {
        self.used[r] = true;
        self.links.push((i, r));
        self.run(i + 1, chunks);
        self.links.pop();
        self.used[r] = false;
    }
}

/// Node budget for the chunk-minimizing search; beyond it the best alignment found so far is kept.
const SEARCH_BUDGET: usize = 200_000;

/// Alignment with the most exact links, then the most stem links, then the fewest chunks.
pub fn align(cand: &[String], reference: &[String]) -> Alignment {
    let mut cand_words: HashMap<&str, usize> = HashMap::new();
    let mut ref_words: HashMap<&str, usize> = HashMap::new();
    for w in cand {
        *cand_words.entry(w).or_insert(0) += 1;
    }
    for w in reference {
        *ref_words.entry(w).or_insert(0) += 1;
    }
    let exact_quota: HashMap<&str, usize> = cand_words
        .iter()
        .map(|(w, &c)| (*w, c.min(ref_words.get(w).copied().unwrap_or(0))))
        .collect();

    let mut cand_left: HashMap<&str, usize> = HashMap::new();
    for (w, &c) in &cand_words {
        *cand_left.entry(stem(w)).or_insert(0) += c - exact_quota[w];
    }
    let mut ref_left: HashMap<&str, usize> = HashMap::new();
    for (w, &c) in &ref_words {
        let used = exact_quota.get(w).copied().unwrap_or(0);
        *ref_left.entry(stem(w)).or_insert(0) += c - used;
    }
    let stem_quota = cand_left
        .iter()
        .map(|(s, &c)| (*s, c.min(ref_left.get(s).copied().unwrap_or(0))))
        .collect();

    let cand_stems: Vec<&str> = cand.iter().map(|w| stem(w)).collect();
    let mut remaining_stem: HashMap<&str, usize> = HashMap::new();
    for s in &cand_stems {
        *remaining_stem.entry(s).or_insert(0) += 1;
    }
    let mut search = Search {
        cand,
        reference,
        cand_stems,
        ref_stems: reference.iter().map(|w| stem(w)).collect(),
        exact_quota,
        stem_quota,
        remaining_word: cand_words,
        remaining_stem,
        used: vec![false; reference.len()],
        links: Vec::new(),
        best: None,
        budget: SEARCH_BUDGET,
    };
    search.run(0, 0);
    search.best.unwrap_or(Alignment {
        links: Vec::new(),
        chunks: 0,
    })
}

fn meteor_single(cand: &[String], reference: &[String]) -> f64 {
    if cand.is_empty() && reference.is_empty() {
        return 1.0;
    }
    let a = align(cand, reference);
    let m = a.links.len() as f64;
    if m == 0.0 {
        return 0.0;
    }
    let p = m / cand.len() as f64;
    let r = m / reference.len() as f64;
    let fmean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (a.chunks as f64 / m).powi(3);
    fmean * (1.0 - penalty)
}

/// Best score over the references.
pub fn meteor(pair: &EvalPair) -> f64 {
    pair.references
        .iter()
        .map(|r| meteor_single(&pair.candidate, r))
        .fold(0.0, f64::max)
}

pub fn meteor_corpus(corpus: &[EvalPair]) -> f64 {
    mean(corpus.iter().map(meteor))
}
