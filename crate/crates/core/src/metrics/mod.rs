//! Corpus-level text-generation metrics over tokenized candidate and reference sentences.
//!
//! Every similarity score lies in `[0, 1]` except CIDEr-D, which is unbounded above. Error rates
//! are non-negative. Corpus scores are means of sentence scores, except BLEU, which pools n-gram
//! counts, and CIDEr-D and BERTScore, whose document frequencies come from the whole corpus.

mod bleu;
mod chrf;
mod cider;
mod embedding;
mod gleu;
mod meteor;
mod ngram;
mod ribes;
mod rouge;
mod ter;
mod wer;

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use bleu::{bleu_suite, brevity_penalty, ngram_precision, BleuScores};
pub use chrf::{chrf, chrf_corpus, CHRF_BETA, CHRF_ORDER};
pub use cider::{cider, cider_scores, CIDER_SIGMA};
pub use embedding::{
    bertscore, bertscore_corpus, cosine, laser_corpus, laser_sim, BertScore, EmbeddingProvider, HashEmbeddings,
    IdfTable, ModelEmbeddings,
};
pub use gleu::{gleu, gleu_corpus};
pub use meteor::{align, count_chunks, meteor, meteor_corpus, stem, Alignment};
pub use ribes::{normalized_kendall_tau, ribes, ribes_corpus, word_rank_alignment, RIBES_ALPHA};
pub use rouge::{lcs_len, rouge_l, rouge_l_corpus, ROUGE_BETA};
pub use ter::{apply_shift, ter, ter_corpus, ter_edits, TerEdits, MAX_SHIFT_LEN};
pub use wer::{edit_counts, edit_distance, wer_corpus, wer_decomposed, EditCounts, WerScores};

use crate::data::tokenize;
use crate::error::{Error, Result};

/// One candidate and its references, as token lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

impl EvalPair {
    pub fn new(candidate: Vec<String>, references: Vec<Vec<String>>) -> Result<Self> {
        if references.is_empty() {
            return Err(Error::Invalid("an evaluation pair needs at least one reference".into()));
        }
        Ok(EvalPair { candidate, references })
    }

    /// Tokenizes raw strings with the shared tokenizer.
    pub fn from_text<S: AsRef<str>>(candidate: &str, references: &[S]) -> Result<Self> {
        EvalPair::new(
            tokenize(candidate),
            references.iter().map(|r| tokenize(r.as_ref())).collect(),
        )
    }
}

/// Groups of metrics that can be requested together.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// BLEU 1-4, METEOR, ROUGE-L, CIDEr-D.
    Gen,
    /// BERTScore, brevity penalty, chrF, GLEU, LASER-style similarity, RIBES.
    Sim,
    /// TER and the WER decomposition.
    Err,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Gen, Suite::Sim, Suite::Err];

    /// Parses `gen`, `sim`, `err` or `all`, comma-separated.
    pub fn parse_list(text: &str) -> Result<Vec<Suite>> {
        let mut out = BTreeSet::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(Suite::ALL);
            } else {
                out.insert(part.parse()?);
            }
        }
        if out.is_empty() {
            return Err(Error::Config("no metric suite requested".into()));
        }
        Ok(out.into_iter().collect())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gen" => Ok(Suite::Gen),
            "sim" => Ok(Suite::Sim),
            "err" => Ok(Suite::Err),
            other => Err(Error::Config(format!("unknown metric suite {other:?}"))),
        }
    }
}

/// Column names in report order.
pub const COLUMNS: [&str; 19] = [
    "B-1", "B-2", "B-3", "B-4", "M", "R-L", "C", "BERTScore", "BP", "chrF", "GLEU", "LASER", "RIBES", "TER", "WER",
    "WER-D", "WER-I", "WER-S", "unique_nonstop",
];

/// Corpus scores; `None` marks a suite that was not requested.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu: Option<[f64; 4]>,
    pub meteor: Option<f64>,
    pub rouge_l: Option<f64>,
    pub cider: Option<f64>,
    pub bertscore_f: Option<f64>,
    pub bp: Option<f64>,
    pub chrf: Option<f64>,
    pub gleu: Option<f64>,
    pub laser: Option<f64>,
    pub ribes: Option<f64>,
    pub ter: Option<f64>,
    pub wer: Option<WerScores>,
    pub unique_nonstop: usize,
}

impl MetricReport {
    /// Values aligned with [`COLUMNS`].
    pub fn values(&self) -> [Option<f64>; 19] {
        let b = |i: usize| self.bleu.map(|b| b[i]);
        let w = self.wer;
        [
            b(0),
            b(1),
            b(2),
            b(3),
            self.meteor,
            self.rouge_l,
            self.cider,
            self.bertscore_f,
            self.bp,
            self.chrf,
            self.gleu,
            self.laser,
            self.ribes,
            self.ter,
            w.map(|w| w.wer),
            w.map(|w| w.deletion),
            w.map(|w| w.insertion),
            w.map(|w| w.substitution),
            Some(self.unique_nonstop as f64),
        ]
    }

    /// `column=value` lines in column order; absent values are written as `-`.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for (name, v) in COLUMNS.iter().zip(self.values()) {
            let _ = writeln!(out, "{name}={}", format_exact(v));
        }
        out
    }
}

/// Shortest decimal that reads back to the same `f64`, or `-`.
pub fn format_exact(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:?}"))
}

pub fn parse_exact(s: &str) -> Result<Option<f64>> {
    if s == "-" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Error::Invalid(format!("not a number: {s:?}")))
}

/// The embedded English stop-word list.
pub fn stopwords() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| include_str!("stopwords.txt").lines().map(str::trim).filter(|l| !l.is_empty()).collect())
}

/// Distinct word tokens across `predictions` that are not stop words. Tokens without a letter or
/// digit are punctuation and never count.
pub fn diversity_stats<S: AsRef<str>>(predictions: &[Vec<S>], stop: &HashSet<&str>) -> usize {
    predictions
        .iter()
        .flatten()
        .map(AsRef::as_ref)
        .filter(|t| t.chars().any(char::is_alphanumeric) && !stop.contains(t))
        .collect::<HashSet<_>>()
        .len()
}

/// Runs the requested suites over the corpus. The diversity count is always filled.
pub fn evaluate_corpus(corpus: &[EvalPair], emb: &dyn EmbeddingProvider, suites: &[Suite]) -> Result<MetricReport> {
    if corpus.is_empty() {
        return Err(Error::Invalid("cannot evaluate an empty corpus".into()));
    }
    if let Some(p) = corpus.iter().find(|p| p.references.is_empty()) {
        return Err(Error::Invalid(format!("pair with candidate {:?} has no reference", p.candidate)));
    }
    let mut r = MetricReport {
        unique_nonstop: diversity_stats(
            &corpus.iter().map(|p| p.candidate.clone()).collect::<Vec<_>>(),
            stopwords(),
        ),
        ..MetricReport::default()
    };
    let needs_bleu = suites.contains(&Suite::Gen) || suites.contains(&Suite::Sim);
    let bleu = if needs_bleu { Some(bleu_suite(corpus)?) } else { None };
    if suites.contains(&Suite::Gen) {
        r.bleu = bleu.map(|b| b.b);
        r.meteor = Some(meteor_corpus(corpus));
        r.rouge_l = Some(rouge_l_corpus(corpus));
        r.cider = Some(cider(corpus));
    }
    if suites.contains(&Suite::Sim) {
        r.bertscore_f = Some(bertscore_corpus(corpus, emb));
        r.bp = bleu.map(|b| b.bp);
        r.chrf = Some(chrf_corpus(corpus));
        r.gleu = Some(gleu_corpus(corpus));
        r.laser = Some(laser_corpus(corpus, emb));
        r.ribes = Some(ribes_corpus(corpus));
    }
    if suites.contains(&Suite::Err) {
        r.ter = Some(ter_corpus(corpus));
        r.wer = Some(wer_corpus(corpus));
    }
    Ok(r)
}
