//! Sequence runner, inference, metrics, persistence and configuration.

mod checkpoint;
mod config;
pub mod container;
mod metrics;
mod model;
mod runner;

pub use checkpoint::{load_checkpoint, save_backbone, save_checkpoint, MANIFEST};
pub use config::{Ablation, RunConfig};
pub use metrics::{metrics, AccuracyMatrix};
pub use model::{split_accuracy, DomainRecord, Inference, Model};
pub use runner::{
    pretrain_to_dir, run_sequence, run_to_dir, DomainSummary, DomainTiming, Learner, PretrainLog,
    RunLock, RunOptions, RunOutcome, RunReport, Timings, LOCK_FILE,
};
