//! Iterative pruning of low-confidence training patches with fine-tuning between rounds.

pub mod config;
pub mod prune;
pub mod run;
pub mod train;

pub use config::{ConfidenceMode, RalConfig};
pub use prune::{
    confidence, predict_active, prune_by_confidence, prune_by_group, score_training_set,
};
pub use run::{
    run_ral, AuditEntry, Evaluation, IterationReport, RalOutcome, RalStatus, RemovalReason,
};
pub use train::{finetune, initial_train, EpochLog, TrainLog, Trainer};
