//! Experiment orchestration: configs, training, baselines, evaluation,
//! logs and exports.

pub mod baseline;
pub mod config;
pub mod eval;
pub mod log;
pub mod train;

pub use baseline::{run_baseline, BaselineMethod, BaselineOutcome};
pub use config::{Ablation, RunConfig};
pub use eval::{evaluate, EvalReport};
pub use log::{export_figures, read_log, LogRow, RunManifest};
pub use train::{reference_mean_ee, train, Checkpoint, SeedRun, TrainOptions, TrainSummary};
