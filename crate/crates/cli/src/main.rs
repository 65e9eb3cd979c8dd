use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lumen_core::data::{generate_synthetic_corpus, load_dataset, validate_counts, write_dataset, Split, SyntheticSpec};
use lumen_core::decoding::{DecodeConfig, Strategy};
use lumen_core::harness::{
    emit_tables, load_predictions, predict, prediction_pairs, role_accuracy, run_ablations, run_experiment,
    suites_or_all, write_predictions, ExperimentConfig, Provenance, ReportTable,
};
use lumen_core::metrics::{evaluate_corpus, HashEmbeddings, ModelEmbeddings};
use lumen_core::model::{gradcheck_suite, Lumen};
use lumen_core::{Error, Result};

/// Output root used when neither `--out` nor this variable is given: `runs`.
const OUT_ENV: &str = "LUMEN_OUT";

#[derive(Parser)]
#[command(name = "lumen", version, about = "Meme role labelling and explanation generation")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root; defaults to $LUMEN_OUT, then `runs`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `dotted.key=value` config override, repeatable. Applied after the file, before `--seed`.
    #[arg(long = "set", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset file and print its count table.
    Ingest {
        #[arg(long)]
        data: PathBuf,
        /// Fail unless the counts match the published ExHVV summary, listing differing cells.
        #[arg(long)]
        expect_exhvv: bool,
    },
    /// Write a synthetic dataset to `<out>/synthetic.jsonl`.
    Synth {
        /// Samples per role as hero,villain,victim.
        #[arg(long, default_value = "10,10,10")]
        per_role: String,
        #[arg(long, default_value_t = 0.0)]
        val: f64,
        #[arg(long, default_value_t = 0.0)]
        test: f64,
        #[arg(long, default_value_t = 32)]
        image_size: usize,
    },
    /// Train, decode the evaluation split and score it.
    Train,
    /// Decode explanations with a checkpoint.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long, value_parser = ["greedy", "beam"], default_value = "greedy")]
        strategy: String,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 32)]
        max_len: usize,
        #[arg(long, default_value_t = 0.7)]
        alpha: f64,
    },
    /// Score a predictions file.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        /// Comma-separated suites: gen, sim, err, or all.
        #[arg(long, default_value = "all")]
        suite: String,
        /// `hash` or `model:<checkpoint>`.
        #[arg(long, default_value = "hash")]
        emb: String,
    },
    /// Run the nine-row ablation sweep.
    Ablate,
    /// Finite-difference gradient checks of every block and the full model.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        /// Central-difference step.
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
    },
}

fn out_root(common: &Common) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn experiment_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::synthetic_default("lumen"),
    };
    cfg.apply_overrides(&common.overrides)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn run(cli: Cli) -> Result<()> {
    let common = &cli.common;
    let out = out_root(common);
    match cli.cmd {
        Command::Ingest { data, expect_exhvv } => {
            let samples = load_dataset(&data)?;
            let table = validate_counts(&samples);
            print!("{}", table.render());
            if expect_exhvv {
                table.expect_exhvv()?;
                println!("exhvv counts match");
            }
        }
        Command::Synth {
            per_role,
            val,
            test,
            image_size,
        } => {
            let counts: Vec<usize> = per_role
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Invalid(format!("--per-role {per_role:?} is not three integers")))?;
            let per_role: [usize; 3] = counts
                .try_into()
                .map_err(|_| Error::Invalid("--per-role takes exactly three counts".into()))?;
            let spec = SyntheticSpec {
                seed: common.seed.unwrap_or(0),
                per_role,
                image_size,
                val_fraction: val,
                test_fraction: test,
                ..SyntheticSpec::default()
            };
            let samples = generate_synthetic_corpus(&spec)?;
            create_dir(&out)?;
            let path = out.join("synthetic.jsonl");
            write_dataset(&path, &samples)?;
            println!("{} samples -> {}", samples.len(), path.display());
        }
        Command::Train => {
            let cfg = experiment_config(common)?;
            let outcome = run_experiment(&cfg, &out)?;
            println!("run {}", outcome.run_dir.display());
            if let Some(e) = outcome.log.epochs.last() {
                println!("final epoch {} l_total {:.6} role_accuracy {:.4}", e.epoch, e.l_total, e.role_accuracy);
            }
            print!("{}", fs::read_to_string(outcome.run_dir.join("report.txt")).unwrap_or_default());
        }
        Command::Generate {
            ckpt,
            data,
            split,
            strategy,
            k,
            max_len,
            alpha,
        } => {
            let split: Split = split.parse().map_err(Error::Invalid)?;
            let decode = DecodeConfig {
                strategy: if strategy == "beam" { Strategy::Beam } else { Strategy::Greedy },
                k,
                max_len,
                alpha,
            };
            decode.validate()?;
            let (model, vocab) = Lumen::<f64>::load(&ckpt)?;
            let samples = load_dataset(&data)?;
            let chosen: Vec<_> = samples.iter().filter(|s| s.split == split).collect();
            let preds = predict(&model, &vocab, &chosen, &decode)?;
            create_dir(&out)?;
            let path = out.join("predictions.jsonl");
            write_predictions(&path, &preds)?;
            println!(
                "{} predictions -> {} (role accuracy {:.4})",
                preds.len(),
                path.display(),
                role_accuracy(&preds)
            );
        }
        Command::Eval { pred, suite, emb } => {
            let suites = suites_or_all(Some(&suite))?;
            let preds = load_predictions(&pred)?;
            let pairs = prediction_pairs(&preds)?;
            let report = match emb.as_str() {
                "hash" => evaluate_corpus(&pairs, &HashEmbeddings::default(), &suites)?,
                other => {
                    let ckpt = other
                        .strip_prefix("model:")
                        .ok_or_else(|| Error::Invalid(format!("--emb {other:?} is neither hash nor model:<ckpt>")))?;
                    let (model, vocab) = Lumen::<f64>::load(Path::new(ckpt))?;
                    evaluate_corpus(&pairs, &ModelEmbeddings::from_model(&model, &vocab), &suites)?
                }
            };
            let seed = common.seed.unwrap_or(0);
            let mut table = ReportTable::new(Provenance::new(seed, format!("eval:{suite}:{emb}")));
            let name = pred.file_stem().map_or("predictions".into(), |s| s.to_string_lossy().into_owned());
            table.push(&name, &report);
            create_dir(&out)?;
            emit_tables(&table, &out, "eval")?;
            write(&out.join("eval.kv"), &report.to_key_values())?;
            print!("{}", table.to_text());
        }
        Command::Ablate => {
            let cfg = experiment_config(common)?;
            let outcome = run_ablations(&cfg, &out)?;
            print!("{}", outcome.table.to_text());
            for c in &outcome.checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.row, c.description);
            }
            if let Some(note) = &outcome.table.incomplete {
                return Err(Error::Invalid(format!("ablation table incomplete: {note}")));
            }
        }
        Command::Gradcheck { seeds, h } => {
            let cases = gradcheck_suite(seeds, h)?;
            let mut ok = true;
            let mut lines = String::new();
            for c in &cases {
                let pass = c.report.max_rel_error < 1e-4;
                ok &= pass;
                lines.push_str(&format!(
                    "{}\t{}\t{:.3e}\t{}\n",
                    if pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.report.max_rel_error,
                    c.report.checked
                ));
            }
            create_dir(&out)?;
            write(&out.join("gradcheck.tsv"), &lines)?;
            print!("{lines}");
            if !ok {
                return Err(Error::Invalid("gradient check above 1e-4 relative error".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ").replace('"', "'");
            eprintln!("error: kind={} msg=\"{}\"", e.kind(), msg);
            ExitCode::FAILURE
        }
    }
}
