use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::report::{emit_tables, Provenance, ReportTable};
use super::run::{load_samples, run_experiment, ExperimentOutcome};
use crate::data::Split;
use crate::error::{Error, Result};
use crate::model::{FusionMode, LossWeighting, Lumen, OptimizerKind, PreparedSample};
use crate::nn::DecoderFamily;
use crate::tensor::Graph;

/// Row labels of the sweep, in table order.
pub const ABLATION_ROWS: [&str; 9] = [
    "+ self-attend",
    "LUMEN",
    "- adafactor",
    "- wtd loss",
    "- captions",
    "- T5 + GPT2",
    "- MTL",
    "- deBERTa-v2",
    "- ViT",
];

/// The nine configurations, each named after `base` plus a slug of its row label.
pub fn ablation_configs(base: &ExperimentConfig) -> Vec<(&'static str, ExperimentConfig)> {
    ABLATION_ROWS
        .iter()
        .map(|&row| {
            let mut cfg = base.clone();
            let m = &mut cfg.model;
            match row {
                "+ self-attend" => m.fusion = FusionMode::SelfAttend,
                "- adafactor" => m.optimizer = OptimizerKind::Adam,
                "- wtd loss" => m.loss_weighting = LossWeighting::Unweighted,
                "- captions" => m.include_caption = false,
                "- T5 + GPT2" => m.decoder = DecoderFamily::DecoderOnly,
                "- MTL" => m.betas = [0.0, 1.0, 0.0],
                "- deBERTa-v2" => m.entity = false,
                "- ViT" => m.visual = false,
                _ => {}
            }
            cfg.name = format!("{}-{}", base.name, slug(row));
            (row, cfg)
        })
        .collect()
}

fn slug(row: &str) -> String {
    let s: String = row
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    let parts: Vec<&str> = s.split('-').filter(|p| !p.is_empty()).collect();
    let body = parts.join("-");
    match row.chars().next() {
        Some('+') => format!("plus-{body}"),
        Some('-') => format!("minus-{body}"),
        _ => body,
    }
}

/// Outcome of one structural check on an ablation row.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationCheck {
    pub row: String,
    pub description: String,
    pub passed: bool,
}

pub struct AblationOutcome {
    pub table: ReportTable,
    pub checks: Vec<AblationCheck>,
    pub dir: PathBuf,
}

impl AblationOutcome {
    pub fn complete(&self) -> bool {
        self.table.incomplete.is_none() && self.table.rows.len() == ABLATION_ROWS.len()
    }
}

/// True when every epoch's largest gradient norm on `group` was exactly zero.
pub fn zero_grads_in_log(outcome: &ExperimentOutcome, group: &str) -> bool {
    !outcome.log.epochs.is_empty()
        && outcome
            .log
            .epochs
            .iter()
            .all(|e| e.grad_norms.get(group).is_some_and(|&n| n == 0.0))
}

/// Shifts every parameter of `group` and checks the joint loss on `data` does not move.
pub fn branch_independent(model: &Lumen<f64>, data: &[PreparedSample<f64>], group: &str) -> Result<bool> {
    let total = |m: &Lumen<f64>| -> Result<f64> {
        let refs: Vec<_> = data.iter().collect();
        let mut g = Graph::inference(&m.store);
        let (_, _, t) = m.forward_batch(&mut g, &refs)?;
        Ok(g.value(t).item())
    };
    let before = total(model)?;
    let mut shifted = Lumen {
        net: model.net.clone(),
        store: model.store.clone(),
    };
    let ids = model.group_ids(group);
    if ids.is_empty() {
        return Ok(false);
    }
    for id in ids {
        for v in shifted.store.get_mut(id).data_mut() {
            *v += 0.37;
        }
    }
    Ok(total(&shifted)? == before)
}

fn structural_checks(row: &str, cfg: &ExperimentConfig, outcome: &ExperimentOutcome) -> Result<Vec<AblationCheck>> {
    let check = |description: String, passed: bool| AblationCheck {
        row: row.to_string(),
        description,
        passed,
    };
    let mut out = Vec::new();
    match row {
        "- MTL" => {
            for group in ["seq_head", "fusion"] {
                out.push(check(
                    format!("zero gradient on {group} in every epoch"),
                    zero_grads_in_log(outcome, group),
                ));
            }
        }
        "- ViT" | "- deBERTa-v2" => {
            let group = if row == "- ViT" { "visual" } else { "entity" };
            let samples = load_samples(cfg, outcome.model.config.image_size)?;
            let data = samples
                .iter()
                .filter(|s| s.split == Split::Train)
                .take(4)
                .map(|s| outcome.model.prepare::<f64>(s, &outcome.vocab))
                .collect::<Result<Vec<_>>>()?;
            out.push(check(
                format!("zero gradient on {group} in every epoch"),
                zero_grads_in_log(outcome, group),
            ));
            out.push(check(
                format!("joint loss unchanged when {group} weights shift"),
                branch_independent(&outcome.model, &data, group)?,
            ));
            if row == "- ViT" {
                let w = outcome.model.fusion.concat_width();
                let want = 2 * outcome.model.config.fusion_width;
                out.push(check(format!("fusion concat width {w} == {want} (two branches)"), w == want));
            }
        }
        _ => {}
    }
    Ok(out)
}

/// Runs the nine configurations in table order. A failed experiment stops the sweep; the rows
/// finished so far are kept and the table is flagged incomplete.
pub fn run_ablations(base: &ExperimentConfig, out_root: &Path) -> Result<AblationOutcome> {
    base.validate()?;
    let mut sweep = base.clone();
    sweep.name = format!("{}-ablation", base.name);
    let dir = sweep.run_dir(out_root);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut table = ReportTable::new(Provenance::new(base.seed, base.hash8()));
    let mut checks = Vec::new();
    for (row, cfg) in ablation_configs(base) {
        let result = run_experiment(&cfg, &dir).and_then(|o| {
            let c = structural_checks(row, &cfg, &o).map_err(|e| Error::Experiment {
                name: cfg.name.clone(),
                source: Box::new(e),
            })?;
            Ok((o, c))
        });
        match result {
            Ok((outcome, c)) => {
                table.push(row, &outcome.report);
                checks.extend(c);
            }
            Err(e) => {
                table.incomplete = Some(format!("stopped at {row}: {e}"));
                break;
            }
        }
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.row, c.description))
        .collect();
    if table.incomplete.is_none() && !failed.is_empty() {
        table.incomplete = Some(format!("failed checks: {}", failed.join("; ")));
    }

    emit_tables(&table, &dir, "ablation")?;
    let mut lines = String::new();
    for c in &checks {
        lines.push_str(&format!(
            "{}\t{}\t{}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.row,
            c.description
        ));
    }
    let p = dir.join("checks.tsv");
    fs::write(&p, lines).map_err(|e| Error::io(&p, e))?;
    Ok(AblationOutcome { table, checks, dir })
}
