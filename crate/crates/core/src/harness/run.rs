use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{DataSource, EmbeddingChoice, ExperimentConfig};
use super::report::{emit_tables, Provenance, ReportTable};
use crate::data::{
    build_vocabulary, detokenize, generate_synthetic_corpus, load_dataset, tokenize, ImageSource, MemeSample,
    Split, Vocabulary,
};
use crate::decoding::{generate, DecodeConfig};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_corpus, EmbeddingProvider, EvalPair, HashEmbeddings, MetricReport, ModelEmbeddings, Suite};
use crate::model::{train, Lumen, TrainLog};

/// A dataset line plus the model's outputs for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub image_path: Option<String>,
    pub ocr_text: String,
    pub caption: String,
    pub entity: String,
    pub role: String,
    pub explanations: Vec<String>,
    pub split: String,
    pub domain: String,
    pub generated: String,
    pub predicted_role: String,
}

/// Loads the samples an experiment trains and evaluates on.
pub fn load_samples(cfg: &ExperimentConfig, image_size: usize) -> Result<Vec<MemeSample>> {
    match &cfg.data {
        DataSource::File { path } => load_dataset(path),
        DataSource::Synthetic(spec) => {
            let spec = crate::data::SyntheticSpec {
                image_size,
                ..spec.clone()
            };
            generate_synthetic_corpus(&spec)
        }
    }
}

/// Decodes an explanation and predicts a role for each sample.
pub fn predict(
    model: &Lumen<f64>,
    vocab: &Vocabulary,
    samples: &[&MemeSample],
    decode: &DecodeConfig,
) -> Result<Vec<Prediction>> {
    let mut out = Vec::with_capacity(samples.len());
    for s in samples {
        let prepared = model.prepare::<f64>(s, vocab)?;
        let generated = if model.config.generator {
            let hyp = generate(&model.generator, &model.store, &prepared.prompt, decode)?;
            detokenize(&vocab.decode(hyp.content()))
        } else {
            String::new()
        };
        let (_, _, cls) = model.forward_sample(s, vocab)?;
        out.push(Prediction {
            id: s.id.clone(),
            image_path: match &s.image {
                Some(ImageSource::File(p)) => Some(p.to_string_lossy().into_owned()),
                _ => None,
            },
            ocr_text: s.ocr_text.clone(),
            caption: s.caption.clone(),
            entity: s.entity.clone(),
            role: s.role.as_str().into(),
            explanations: s.explanations.clone(),
            split: s.split.as_str().into(),
            domain: s.domain.as_str().into(),
            generated,
            predicted_role: cls.predicted().as_str().into(),
        });
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, preds: &[Prediction]) -> Result<()> {
    let mut buf = Vec::new();
    for p in preds {
        serde_json::to_writer(&mut buf, p).expect("prediction serializes");
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Generated text against every annotator's explanation.
pub fn prediction_pairs(preds: &[Prediction]) -> Result<Vec<EvalPair>> {
    preds
        .iter()
        .map(|p| EvalPair::new(tokenize(&p.generated), p.explanations.iter().map(|e| tokenize(e)).collect()))
        .collect()
}

pub fn role_accuracy(preds: &[Prediction]) -> f64 {
    if preds.is_empty() {
        return 0.0;
    }
    preds.iter().filter(|p| p.role == p.predicted_role).count() as f64 / preds.len() as f64
}

/// Everything a finished experiment produced.
pub struct ExperimentOutcome {
    pub run_dir: PathBuf,
    pub report: MetricReport,
    pub log: TrainLog,
    pub predictions: Vec<Prediction>,
    pub model: Lumen<f64>,
    pub vocab: Vocabulary,
}

fn annotate(name: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| Error::Experiment {
        name: name.to_string(),
        source: Box::new(e),
    }
}

/// Trains, decodes the evaluation split and scores it, writing every artifact under
/// `<out_root>/<name>-<hash8>/`.
pub fn run_experiment(cfg: &ExperimentConfig, out_root: &Path) -> Result<ExperimentOutcome> {
    run_inner(cfg, out_root).map_err(annotate(&cfg.name))
}

fn run_inner(cfg: &ExperimentConfig, out_root: &Path) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let probe = cfg.model.resolve(1)?;
    let samples = load_samples(cfg, probe.image_size)?;
    let vocab = build_vocabulary(&samples);
    let lumen_cfg = cfg.model.resolve(vocab.len())?;
    let mut model = Lumen::<f64>::new(lumen_cfg, cfg.seed)?;

    let of = |split: Split| samples.iter().filter(move |s| s.split == split);
    let prep = |split: Split, model: &Lumen<f64>| of(split).map(|s| model.prepare::<f64>(s, &vocab)).collect::<Result<Vec<_>>>();
    let train_set = prep(Split::Train, &model)?;
    let val_set = prep(Split::Val, &model)?;
    let log = train(&mut model, &train_set, &val_set, &cfg.train_config())?;

    let eval: Vec<&MemeSample> = of(cfg.eval_split).collect();
    if eval.is_empty() {
        return Err(Error::Config(format!("no samples in the {} split", cfg.eval_split.as_str())));
    }
    let predictions = predict(&model, &vocab, &eval, &cfg.decode)?;
    let pairs = prediction_pairs(&predictions)?;
    let report = match cfg.embedding {
        EmbeddingChoice::Hash => evaluate_corpus(&pairs, &HashEmbeddings::default(), &cfg.suites)?,
        EmbeddingChoice::Model => {
            let emb: &dyn EmbeddingProvider = &ModelEmbeddings::from_model(&model, &vocab);
            evaluate_corpus(&pairs, emb, &cfg.suites)?
        }
    };

    let dir = cfg.run_dir(out_root);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let write = |name: &str, body: String| {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))
    };
    write("config.toml", cfg.to_toml())?;
    write("seed", format!("{}\n", cfg.seed))?;
    model.save(&dir.join("model.ckpt"), &vocab)?;
    log.write_jsonl(&dir.join("train_log.jsonl"))?;
    write_predictions(&dir.join("predictions.jsonl"), &predictions)?;
    let mut table = ReportTable::new(Provenance::new(cfg.seed, cfg.hash8()));
    table.push(&cfg.name, &report);
    emit_tables(&table, &dir, "report")?;
    write("report.kv", report.to_key_values())?;

    Ok(ExperimentOutcome {
        run_dir: dir,
        report,
        log,
        predictions,
        model,
        vocab,
    })
}

/// Suites named on the command line, or all of them.
pub fn suites_or_all(s: Option<&str>) -> Result<Vec<Suite>> {
    s.map_or_else(|| Ok(Suite::ALL.to_vec()), Suite::parse_list)
}
