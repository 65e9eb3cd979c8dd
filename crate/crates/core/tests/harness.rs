use std::fs;

use lumen_core::data::SyntheticSpec;
use lumen_core::harness::{
    ablation_configs, run_ablations, run_experiment, Baseline, DataSource, ExperimentConfig, Provenance, ReportTable,
    Scale, ABLATION_ROWS,
};
use lumen_core::metrics::{MetricReport, COLUMNS};
use lumen_core::model::{FusionMode, LossWeighting, LumenConfig, OptimizerKind};
use lumen_core::nn::DecoderFamily;

fn quick(name: &str, epochs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::synthetic_default(name);
    cfg.model.scale = Scale::Tiny;
    cfg.data = DataSource::Synthetic(SyntheticSpec {
        seed: 3,
        per_role: [4, 4, 4],
        val_fraction: 0.25,
        test_fraction: 0.25,
        ..SyntheticSpec::default()
    });
    cfg.train.epochs = epochs;
    cfg.decode.max_len = 8;
    cfg
}

#[test]
fn zero_epochs_gives_finite_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&quick("untrained", 0), dir.path()).unwrap();
    assert!(out.log.epochs.is_empty());
    for (col, v) in COLUMNS.iter().zip(out.report.values()) {
        let v = v.unwrap_or_else(|| panic!("{col} missing"));
        assert!(v.is_finite(), "{col} = {v}");
    }
}

#[test]
fn run_directory_holds_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick("artifacts", 1);
    let out = run_experiment(&cfg, dir.path()).unwrap();
    assert_eq!(out.run_dir, cfg.run_dir(dir.path()));
    for f in ["config.toml", "seed", "model.ckpt", "train_log.jsonl", "predictions.jsonl", "report.txt", "report.tsv", "report.kv"] {
        assert!(out.run_dir.join(f).is_file(), "{f}");
    }
    let saved = ExperimentConfig::load(&out.run_dir.join("config.toml")).unwrap();
    assert_eq!(saved, cfg);
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = quick("rerun", 2);
    let ra = run_experiment(&cfg, a.path()).unwrap().run_dir;
    let rb = run_experiment(&cfg, b.path()).unwrap().run_dir;
    for f in ["model.ckpt", "train_log.jsonl", "predictions.jsonl", "report.tsv", "report.txt", "report.kv"] {
        assert_eq!(fs::read(ra.join(f)).unwrap(), fs::read(rb.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn failures_name_the_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick("broken", 1);
    cfg.data = DataSource::File {
        path: dir.path().join("missing.jsonl"),
    };
    let Err(err) = run_experiment(&cfg, dir.path()) else {
        panic!("missing data file accepted")
    };
    assert_eq!(err.kind(), "io");
    assert!(err.to_string().contains("`broken`"), "{err}");
}

#[test]
fn overrides_and_toml_round_trip() {
    let mut cfg = quick("ovr", 1);
    cfg.apply_overrides(&["train.epochs=7", "model.fusion=self_attend", "decode.strategy=beam", "name=other"])
        .unwrap();
    assert_eq!(cfg.train.epochs, 7);
    assert_eq!(cfg.model.fusion, FusionMode::SelfAttend);
    assert_eq!(cfg.name, "other");
    assert_eq!(ExperimentConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    assert_ne!(cfg.hash8(), quick("ovr", 1).hash8());

    assert_eq!(cfg.clone().apply_overrides(&["no_equals"]).unwrap_err().kind(), "config");
    assert_eq!(cfg.clone().apply_overrides(&["model.bogus=1"]).unwrap_err().kind(), "config");
    assert_eq!(cfg.clone().apply_overrides(&["train.batch_size=0"]).unwrap_err().kind(), "config");
}

#[test]
fn baselines_are_flag_settings() {
    let base = quick("base", 1);
    let text = Baseline::TextOnly.apply(&base).model.resolve(50).unwrap();
    assert!(!text.visual && text.entity && text.generator);
    let image = Baseline::ImageOnly.apply(&base).model.resolve(50).unwrap();
    assert!(image.visual && !image.entity && !image.prompt.include_ocr);
    let single = Baseline::MultimodalSingleTask.apply(&base).model.resolve(50).unwrap();
    assert_eq!(single.betas, [0.0, 1.0, 0.0]);
    let names: Vec<_> = Baseline::ALL.iter().map(|b| b.apply(&base).name).collect();
    assert_eq!(names.len(), 3);
    assert!(names.iter().all(|n| ExperimentConfig { name: n.clone(), ..base.clone() }.validate().is_ok()));
}

#[test]
fn ablation_configs_project_the_flags() {
    let mut base = quick("abl", 1);
    base.model.scale = Scale::Desk;
    let rows = ablation_configs(&base);
    let labels: Vec<_> = rows.iter().map(|(r, _)| *r).collect();
    assert_eq!(labels, ABLATION_ROWS);
    let resolved: Vec<LumenConfig> = rows.iter().map(|(_, c)| c.model.resolve(100).unwrap()).collect();
    let full = &resolved[1];
    assert_eq!(resolved[0].fusion, FusionMode::SelfAttend);
    assert_eq!(resolved[2].optimizer, OptimizerKind::Adam);
    assert_eq!(resolved[3].loss_weighting, LossWeighting::Unweighted);
    assert!(!resolved[4].prompt.include_caption);
    assert_eq!(resolved[5].decoder, DecoderFamily::DecoderOnly);
    assert_eq!(resolved[6].betas, [0.0, 1.0, 0.0]);
    assert!(!resolved[7].entity);
    assert!(!resolved[8].visual);
    assert_eq!(resolved[8].concat_width(), 1024);
    assert_eq!(full.concat_width(), 1536);
    let mut names: Vec<_> = rows.iter().map(|(_, c)| c.name.clone()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 9);
}

#[test]
fn ablation_sweep_fills_nine_rows_and_passes_checks() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ablations(&quick("sweep", 2), dir.path()).unwrap();
    assert!(out.complete(), "{:?}", out.table.incomplete);
    let rows: Vec<_> = out.table.rows.iter().map(|(r, _)| r.as_str()).collect();
    assert_eq!(rows, ABLATION_ROWS);
    let failed: Vec<_> = out.checks.iter().filter(|c| !c.passed).collect();
    assert!(failed.is_empty(), "{failed:?}");
    assert!(out.checks.iter().any(|c| c.row == "- MTL"));
    assert!(out.checks.iter().any(|c| c.row == "- ViT"));
    assert!(out.checks.iter().any(|c| c.row == "- deBERTa-v2"));
    for (_, cells) in &out.table.rows {
        assert!(cells[..7].iter().all(|c| c.is_some()));
    }
    let tsv = fs::read_to_string(out.dir.join("ablation.tsv")).unwrap();
    assert_eq!(ReportTable::from_machine(&tsv).unwrap(), out.table);
}

#[test]
fn failed_experiment_flags_a_partial_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = quick("partial", 1);
    // A missing data file fails the first row before anything trains.
    base.data = DataSource::File {
        path: dir.path().join("absent.jsonl"),
    };
    let out = run_ablations(&base, dir.path()).unwrap();
    assert!(!out.complete());
    assert!(out.table.rows.is_empty());
    assert!(out.table.incomplete.as_deref().unwrap().contains("+ self-attend"));
    let tsv = fs::read_to_string(out.dir.join("ablation.tsv")).unwrap();
    assert!(tsv.contains("# incomplete="));
}

fn one_cell_report() -> MetricReport {
    MetricReport {
        rouge_l: Some(0.5),
        ..MetricReport::default()
    }
}

#[test]
fn empty_table_is_header_only() {
    let table = ReportTable::new(Provenance {
        seed: 1,
        config_hash: "abcd0123".into(),
        timestamp: "none".into(),
    });
    let tsv = table.to_machine();
    assert_eq!(tsv.lines().count(), 2);
    assert_eq!(tsv.lines().nth(1).unwrap(), format!("row\t{}", COLUMNS.join("\t")));
    assert_eq!(table.to_text().lines().count(), 2);
    assert_eq!(ReportTable::from_machine(&tsv).unwrap(), table);
}

#[test]
fn one_cell_table_round_trips() {
    let mut table = ReportTable::new(Provenance {
        seed: 9,
        config_hash: "00ff00ff".into(),
        timestamp: "1700000000".into(),
    });
    table.push("only", &one_cell_report());
    let back = ReportTable::from_machine(&table.to_machine()).unwrap();
    assert_eq!(back, table);
    let filled: Vec<_> = back.rows[0].1.iter().filter(|c| c.is_some()).collect();
    assert_eq!(filled.len(), 2, "R-L plus the diversity count");
}

#[test]
fn column_order_is_documented_schema() {
    assert_eq!(
        &COLUMNS[..7],
        &["B-1", "B-2", "B-3", "B-4", "M", "R-L", "C"]
    );
    assert_eq!(&COLUMNS[7..9], &["BERTScore", "BP"]);
    assert_eq!(&COLUMNS[14..18], &["WER", "WER-D", "WER-I", "WER-S"]);
}
