//! Experiment harness: configuration, commands and report files.

pub mod commands;
pub mod config;
pub mod lock;

pub use commands::{cmd_eval, cmd_generate, cmd_predict_slide, cmd_ral, cmd_tile, cmd_train};
pub use config::{ExperimentConfig, NetworkConfig};
