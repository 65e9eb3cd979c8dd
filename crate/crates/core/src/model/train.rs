use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::OptimizerKind;
use super::lumen::{ClassificationOutput, Lumen, PreparedSample, PARAM_GROUPS};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Adafactor, AdafactorConfig, Adam, AdamConfig, Graph, Optimizer, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub grad_clip: f64,
    /// Seeds the order in which training samples are visited.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 8,
            lr: 1e-3,
            grad_clip: 1.0,
            seed: 0,
        }
    }
}

/// Losses of one optimizer step, as batch means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub epoch: usize,
    pub step: usize,
    pub l_seq: f64,
    pub l_exp: f64,
    pub l_rp: f64,
    pub l_total: f64,
    pub grad_norm: f64,
}

/// Aggregate losses and accuracy over a set of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub l_seq: f64,
    pub l_exp: f64,
    pub l_rp: f64,
    pub l_total: f64,
    pub role_accuracy: f64,
    /// `exp` of the mean next-token negative log-likelihood over every target token.
    pub perplexity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub l_seq: f64,
    pub l_exp: f64,
    pub l_rp: f64,
    pub l_total: f64,
    pub role_accuracy: f64,
    pub val: Option<EvalSummary>,
    /// Largest pre-clipping gradient norm of each parameter group over the epoch's steps.
    pub grad_norms: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept, when a validation split guided selection.
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    /// One JSON object per epoch.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for e in &self.epochs {
            serde_json::to_writer(&mut out, e).map_err(|e| Error::Invalid(e.to_string()))?;
            out.push(b'\n');
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

fn make_optimizer<T: Scalar>(
    kind: OptimizerKind,
    lr: f64,
    store: &ParamStore<T>,
) -> Box<dyn Optimizer<T>> {
    match kind {
        OptimizerKind::Adam => Box::new(Adam::new(
            AdamConfig {
                lr,
                ..AdamConfig::default()
            },
            store,
        )),
        OptimizerKind::Adafactor => Box::new(Adafactor::new(
            AdafactorConfig {
                lr,
                beta1: Some(0.9),
                relative_step: false,
                scale_parameter: false,
                ..AdafactorConfig::default()
            },
            store,
        )),
    }
}

/// Inference over `samples`, averaging each loss over samples.
pub fn evaluate<T: Scalar>(model: &Lumen<T>, samples: &[PreparedSample<T>]) -> Result<EvalSummary> {
    let mut sums = [0.0f64; 4];
    let mut correct = 0usize;
    let mut nll = 0.0f64;
    let mut tokens = 0usize;
    for s in samples {
        let mut g = Graph::inference(&model.store);
        let out = model.forward(&mut g, s)?;
        let item = |v| g.value(v).item().to_f64_lossy();
        let l_exp = out.l_exp.map(item).unwrap_or(0.0);
        sums[0] += out.l_seq.map(item).unwrap_or(0.0);
        sums[1] += l_exp;
        sums[2] += item(out.l_rp);
        sums[3] += item(out.total);
        nll += l_exp * out.exp_steps as f64;
        tokens += out.exp_steps;
        let l = g.value(out.logits).to_f64();
        if ClassificationOutput::from_logits([l[0], l[1], l[2]], s.role).predicted() == s.role {
            correct += 1;
        }
    }
    let n = samples.len().max(1) as f64;
    Ok(EvalSummary {
        n: samples.len(),
        l_seq: sums[0] / n,
        l_exp: sums[1] / n,
        l_rp: sums[2] / n,
        l_total: sums[3] / n,
        role_accuracy: correct as f64 / n,
        perplexity: if tokens == 0 {
            1.0
        } else {
            (nll / tokens as f64).exp()
        },
    })
}

/// Mini-batch training with gradient clipping. When `val` is non-empty the parameters of the
/// epoch with the lowest validation `L_total` are restored at the end.
pub fn train<T: Scalar>(
    model: &mut Lumen<T>,
    train_set: &[PreparedSample<T>],
    val: &[PreparedSample<T>],
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    let mut log = TrainLog::default();
    if cfg.epochs == 0 {
        return Ok(log);
    }
    if train_set.is_empty() {
        return Err(Error::Invalid("training split is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut opt = make_optimizer(model.config.optimizer, cfg.lr, &model.store);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let groups: Vec<(String, Vec<_>)> = PARAM_GROUPS
        .iter()
        .map(|(name, _)| (name.to_string(), model.group_ids(name)))
        .collect();
    let mut best: Option<(f64, ParamStore<T>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = [0.0f64; 4];
        let mut correct = 0usize;
        let mut norms: BTreeMap<String, f64> =
            groups.iter().map(|(n, _)| (n.clone(), 0.0)).collect();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&PreparedSample<T>> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (grads, record, hits) = {
                let mut g = Graph::new(&model.store);
                let (outs, parts, total) = model.forward_batch(&mut g, &batch)?;
                let item = |v| g.value(v).item().to_f64_lossy();
                let record = StepRecord {
                    epoch,
                    step: log.steps.len(),
                    l_seq: parts[0].map(item).unwrap_or(0.0),
                    l_exp: parts[1].map(item).unwrap_or(0.0),
                    l_rp: parts[2].map(item).unwrap_or(0.0),
                    l_total: item(total),
                    grad_norm: 0.0,
                };
                let hits = outs
                    .iter()
                    .zip(&batch)
                    .filter(|(o, s)| {
                        let l = g.value(o.logits).to_f64();
                        ClassificationOutput::from_logits([l[0], l[1], l[2]], s.role).predicted()
                            == s.role
                    })
                    .count();
                g.backward(total)?;
                (g.param_grads(), record, hits)
            };
            let mut record = record;
            if !record.l_total.is_finite() {
                return Err(Error::NonFinite(format!("L_total at step {}", record.step)));
            }
            model.store.set_grads(grads);
            for (name, ids) in &groups {
                let n = model.store.grad_norm(ids.iter().copied()).to_f64_lossy();
                let slot = norms.get_mut(name).expect("group present");
                *slot = slot.max(n);
            }
            record.grad_norm = model.store.clip_grad_norm(T::lit(cfg.grad_clip)).to_f64_lossy();
            opt.step(&mut model.store)?;
            let w = batch.len() as f64;
            sums[0] += record.l_seq * w;
            sums[1] += record.l_exp * w;
            sums[2] += record.l_rp * w;
            sums[3] += record.l_total * w;
            correct += hits;
            log.steps.push(record);
        }
        let n = train_set.len() as f64;
        let val_summary = if val.is_empty() {
            None
        } else {
            Some(evaluate(model, val)?)
        };
        if let Some(v) = &val_summary {
            if best.as_ref().is_none_or(|(b, _)| v.l_total < *b) {
                best = Some((v.l_total, model.store.clone()));
                log.best_epoch = Some(epoch);
            }
        }
        log.epochs.push(EpochRecord {
            epoch,
            l_seq: sums[0] / n,
            l_exp: sums[1] / n,
            l_rp: sums[2] / n,
            l_total: sums[3] / n,
            role_accuracy: correct as f64 / n,
            val: val_summary,
            grad_norms: norms,
        });
    }
    if let Some((_, store)) = best {
        model.store.copy_values_from(&store);
    }
    Ok(log)
}
