//! Experiment orchestration: configs, single runs, the ablation sweep and report tables.

mod ablation;
mod config;
mod report;
mod run;

pub use ablation::{
    ablation_configs, branch_independent, run_ablations, zero_grads_in_log, AblationCheck, AblationOutcome,
    ABLATION_ROWS,
};
pub use config::{Baseline, DataSource, EmbeddingChoice, ExperimentConfig, ModelFlags, Scale, TrainSettings};
pub use report::{emit_tables, Provenance, ReportTable};
pub use run::{
    load_predictions, load_samples, predict, prediction_pairs, role_accuracy, run_experiment, suites_or_all,
    write_predictions, ExperimentOutcome, Prediction,
};
