//! The multi-task model: three branches, the fusion classifier, the joint objective and training.

mod check;
mod config;
mod fusion;
mod losses;
mod lumen;
mod train;

pub use check::{gradcheck_lumen, gradcheck_suite, GradCheckCase};
pub use config::{FusionMode, LossWeighting, LumenConfig, OptimizerKind, DEFAULT_BETAS};
pub use fusion::{BranchVars, FusionHead};
pub use losses::{joint_loss, joint_loss_on_tape, LossBreakdown};
pub use lumen::{
    BranchOutputs, ClassificationOutput, ForwardVars, Lumen, LumenNet, PreparedSample, PARAM_GROUPS,
};
pub use train::{evaluate, train, EpochRecord, EvalSummary, StepRecord, TrainConfig, TrainLog};
