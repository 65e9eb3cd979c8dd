//! Brute-force reference implementations used to check the metrics. They favour enumeration over
//! speed and share no code with the library.

#![allow(dead_code)]

use std::collections::{HashSet, VecDeque};

pub type Toks = Vec<String>;

pub fn toks(s: &str) -> Toks {
    s.split_whitespace().map(str::to_string).collect()
}

/// All n-grams in order of appearance, duplicates kept.
pub fn grams<T: Clone>(s: &[T], n: usize) -> Vec<Vec<T>> {
    if n == 0 || s.len() < n {
        return vec![];
    }
    (0..=s.len() - n).map(|i| s[i..i + n].to_vec()).collect()
}

fn count<T: PartialEq>(list: &[Vec<T>], g: &[T]) -> usize {
    list.iter().filter(|x| x.as_slice() == g).count()
}

fn distinct<T: PartialEq + Clone>(list: &[Vec<T>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = vec![];
    for g in list {
        if !out.contains(g) {
            out.push(g.clone());
        }
    }
    out
}

/// Multiset intersection size by scanning.
pub fn bag_overlap<T: PartialEq + Clone>(a: &[Vec<T>], b: &[Vec<T>]) -> usize {
    distinct(a).iter().map(|g| count(a, g).min(count(b, g))).sum()
}

pub struct Pair {
    pub cand: Toks,
    pub refs: Vec<Toks>,
}

/// (B1..B4, BP) with orders lacking candidate n-grams dropped from the geometric mean.
pub fn bleu(corpus: &[Pair]) -> ([f64; 4], f64) {
    let mut c = 0usize;
    let mut r = 0usize;
    for p in corpus {
        c += p.cand.len();
        let mut best = p.refs[0].len();
        for x in &p.refs {
            let (d, bd) = (x.len().abs_diff(p.cand.len()), best.abs_diff(p.cand.len()));
            if d < bd || (d == bd && x.len() < best) {
                best = x.len();
            }
        }
        r += best;
    }
    let bp = if c > r {
        1.0
    } else if c == 0 {
        if r == 0 { 1.0 } else { 0.0 }
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let mut ps = vec![];
    let mut out = [0.0; 4];
    for n in 1..=4 {
        let (mut m, mut t) = (0usize, 0usize);
        for p in corpus {
            let cg = grams(&p.cand, n);
            t += cg.len();
            for g in distinct(&cg) {
                let cap = p.refs.iter().map(|x| count(&grams(x, n), &g)).max().unwrap();
                m += count(&cg, &g).min(cap);
            }
        }
        if t > 0 {
            ps.push(m as f64 / t as f64);
        }
        out[n - 1] = if ps.is_empty() {
            bp
        } else if ps.iter().any(|&x| x == 0.0) {
            0.0
        } else {
            bp * ps.iter().product::<f64>().powf(1.0 / ps.len() as f64)
        };
    }
    (out, bp)
}

fn is_subsequence(s: &[&String], t: &[String]) -> bool {
    let mut it = t.iter();
    s.iter().all(|x| it.any(|y| y == *x))
}

/// LCS by enumerating every subsequence of `a`.
pub fn lcs(a: &[String], b: &[String]) -> usize {
    let mut best = 0;
    for mask in 0u32..(1 << a.len()) {
        let sub: Vec<&String> = (0..a.len()).filter(|i| mask >> i & 1 == 1).map(|i| &a[i]).collect();
        if sub.len() > best && is_subsequence(&sub, b) {
            best = sub.len();
        }
    }
    best
}

pub fn rouge_l(p: &Pair) -> f64 {
    p.refs
        .iter()
        .map(|r| {
            if p.cand.is_empty() && r.is_empty() {
                return 1.0;
            }
            let l = lcs(&p.cand, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let (pr, rc) = (l / p.cand.len() as f64, l / r.len() as f64);
            let b2 = 1.2f64 * 1.2;
            (1.0 + b2) * pr * rc / (rc + b2 * pr)
        })
        .fold(0.0, f64::max)
}

pub fn gleu(p: &Pair) -> f64 {
    p.refs
        .iter()
        .map(|r| {
            let (mut m, mut tc, mut tr) = (0, 0, 0);
            for n in 1..=4 {
                let (cg, rg) = (grams(&p.cand, n), grams(r, n));
                m += bag_overlap(&cg, &rg);
                tc += cg.len();
                tr += rg.len();
            }
            if tc == 0 && tr == 0 {
                1.0
            } else if tc == 0 || tr == 0 {
                0.0
            } else {
                (m as f64 / tc as f64).min(m as f64 / tr as f64)
            }
        })
        .fold(0.0, f64::max)
}

pub fn chrf(p: &Pair) -> f64 {
    let chars = |t: &Toks| t.concat().chars().filter(|c| !c.is_whitespace()).collect::<Vec<char>>();
    let c = chars(&p.cand);
    p.refs
        .iter()
        .map(|r| {
            let r = chars(r);
            if c.is_empty() && r.is_empty() {
                return 1.0;
            }
            let (mut ps, mut rs, mut k) = (0.0, 0.0, 0);
            for n in 1..=6 {
                let (cg, rg) = (grams(&c, n), grams(&r, n));
                if cg.is_empty() || rg.is_empty() {
                    continue;
                }
                let m = bag_overlap(&cg, &rg) as f64;
                ps += m / cg.len() as f64;
                rs += m / rg.len() as f64;
                k += 1;
            }
            if k == 0 {
                return 0.0;
            }
            let (pp, rr) = (ps / k as f64, rs / k as f64);
            if pp + rr == 0.0 {
                0.0
            } else {
                5.0 * pp * rr / (4.0 * pp + rr)
            }
        })
        .fold(0.0, f64::max)
}

/// Every alignment path from (0,0) to (n,m); returns (cost, S, D, I) of the cheapest with the
/// most substitutions.
pub fn edit_script(cand: &[String], reference: &[String]) -> (usize, usize, usize, usize) {
    fn walk(
        c: &[String],
        r: &[String],
        i: usize,
        j: usize,
        acc: (usize, usize, usize),
        best: &mut Option<(usize, usize, usize, usize)>,
    ) {
        if i == c.len() && j == r.len() {
            let (s, d, ins) = acc;
            let cost = s + d + ins;
            let better = match best {
                None => true,
                Some((bc, bs, _, _)) => cost < *bc || (cost == *bc && s > *bs),
            };
            if better {
                *best = Some((cost, s, d, ins));
            }
            return;
        }
        if i < c.len() && j < r.len() {
            let sub = usize::from(c[i] != r[j]);
            walk(c, r, i + 1, j + 1, (acc.0 + sub, acc.1, acc.2), best);
        }
        if j < r.len() {
            walk(c, r, i, j + 1, (acc.0, acc.1 + 1, acc.2), best);
        }
        if i < c.len() {
            walk(c, r, i + 1, j, (acc.0, acc.1, acc.2 + 1), best);
        }
    }
    let mut best = None;
    walk(cand, reference, 0, 0, (0, 0, 0), &mut best);
    best.unwrap()
}

/// (WER, D, I, S) against the min-WER reference.
pub fn wer(p: &Pair) -> (f64, f64, f64, f64) {
    let mut best: Option<(f64, f64, f64, f64)> = None;
    for r in &p.refs {
        let (cost, s, d, i) = edit_script(&p.cand, r);
        let n = r.len().max(1) as f64;
        let v = (cost as f64 / n, d as f64 / n, i as f64 / n, s as f64 / n);
        if best.is_none_or(|b| v.0 < b.0) {
            best = Some(v);
        }
    }
    best.unwrap()
}

fn shifted(seq: &[String], start: usize, len: usize, dest: usize) -> Toks {
    let mut rest: Toks = seq[..start].to_vec();
    rest.extend_from_slice(&seq[start + len..]);
    let mut out = rest[..dest].to_vec();
    out.extend_from_slice(&seq[start..start + len]);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// Minimum over all shift sequences of (shifts + edit distance), by breadth-first search over
/// every reachable word order.
pub fn ter_exhaustive_edits(cand: &[String], reference: &[String]) -> usize {
    let ed = |s: &[String]| edit_script(s, reference).0;
    let mut best = ed(cand);
    let mut seen: HashSet<Toks> = HashSet::new();
    let mut queue = VecDeque::from([(cand.to_vec(), 0usize)]);
    seen.insert(cand.to_vec());
    while let Some((s, depth)) = queue.pop_front() {
        best = best.min(depth + ed(&s));
        if depth + 1 >= best {
            continue;
        }
        for start in 0..s.len() {
            for len in 1..=s.len() - start {
                for dest in 0..=s.len() - len {
                    let t = shifted(&s, start, len, dest);
                    if seen.insert(t.clone()) {
                        queue.push_back((t, depth + 1));
                    }
                }
            }
        }
    }
    best
}

pub fn ter(p: &Pair) -> f64 {
    p.refs
        .iter()
        .map(|r| ter_exhaustive_edits(&p.cand, r) as f64 / r.len().max(1) as f64)
        .fold(f64::INFINITY, f64::min)
}

fn occurrences(seq: &[String], span: &[String]) -> Vec<usize> {
    (0..seq.len())
        .filter(|&i| i + span.len() <= seq.len() && seq[i..i + span.len()] == *span)
        .collect()
}

/// Word-order alignment: unique words first, then the narrowest unique context around the word,
/// trying left context before right context at each width, then occurrence rank. Reference slots
/// are used at most once.
pub fn ribes_alignment(cand: &[String], reference: &[String]) -> Vec<usize> {
    let mut taken = HashSet::new();
    let mut out = vec![];
    for i in 0..cand.len() {
        if occurrences(reference, &cand[i..=i]).is_empty() {
            continue;
        }
        let mut pos = None;
        let unique = |span: &[String]| occurrences(cand, span).len() == 1 && occurrences(reference, span).len() == 1;
        if unique(&cand[i..=i]) {
            pos = Some(occurrences(reference, &cand[i..=i])[0]);
        } else {
            for w in 1..cand.len() {
                if w <= i && unique(&cand[i - w..=i]) {
                    pos = Some(occurrences(reference, &cand[i - w..=i])[0] + w);
                    break;
                }
                if i + w < cand.len() && unique(&cand[i..=i + w]) {
                    pos = Some(occurrences(reference, &cand[i..=i + w])[0]);
                    break;
                }
            }
            if pos.is_none() {
                let rank = occurrences(&cand[..i], &cand[i..=i]).len();
                pos = occurrences(reference, &cand[i..=i]).get(rank).copied();
            }
        }
        if let Some(p) = pos {
            if taken.insert(p) {
                out.push(p);
            }
        }
    }
    out
}

pub fn ribes(p: &Pair) -> f64 {
    p.refs
        .iter()
        .map(|r| {
            if p.cand.is_empty() {
                return if r.is_empty() { 1.0 } else { 0.0 };
            }
            let a = ribes_alignment(&p.cand, r);
            let nkt = match a.len() {
                0 => 0.0,
                1 => 1.0,
                n => {
                    let mut conc = 0.0;
                    let mut all = 0.0;
                    for x in 0..n {
                        for y in 0..n {
                            if x < y {
                                all += 1.0;
                                if a[x] < a[y] {
                                    conc += 1.0;
                                }
                            }
                        }
                    }
                    conc / all
                }
            };
            nkt * (a.len() as f64 / p.cand.len() as f64).powf(0.25)
        })
        .fold(0.0, f64::max)
}
