use std::collections::HashMap;
use std::hash::Hash;

pub(crate) type Counts<'a, T> = HashMap<&'a [T], usize>;

/// Multiset of the `n`-grams of `seq`. Empty when `seq` is shorter than `n`.
pub(crate) fn ngrams<T: Eq + Hash>(seq: &[T], n: usize) -> Counts<'_, T> {
    let mut counts = HashMap::new();
    if n == 0 || seq.len() < n {
        return counts;
    }
    for w in seq.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Size of the multiset intersection.
pub(crate) fn overlap<T: Eq + Hash>(a: &Counts<'_, T>, b: &Counts<'_, T>) -> usize {
    a.iter().map(|(g, &c)| c.min(b.get(g).copied().unwrap_or(0))).sum()
}

pub(crate) fn total<T>(c: &Counts<'_, T>) -> usize {
    c.values().sum()
}

/// Mean in a fixed order, so corpus scores do not depend on evaluation scheduling.
pub(crate) fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Harmonic F-measure with recall weighted `beta` times as much as precision.
pub(crate) fn f_beta(precision: f64, recall: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = recall + b2 * precision;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * precision * recall / denom
    }
}
