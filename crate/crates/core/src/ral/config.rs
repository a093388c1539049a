use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::AdamConfig;

/// What "confidence" in a record's label means when scoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceMode {
    /// Softmax probability of the record's own label.
    #[default]
    AssignedLabel,
    /// Largest softmax probability, whatever the class.
    MaxProbability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RalConfig {
    /// Records scoring strictly below this are removed.
    pub tau: f64,
    /// A group loses its remaining members when strictly more than this many
    /// of its members were removed in the same round.
    pub group_threshold: usize,
    /// Refinement rounds after the initial training (K).
    pub iterations: usize,
    /// Epoch cap for the initial training.
    pub max_epochs: usize,
    /// Initial training stops once an epoch reaches this patch accuracy (percent).
    pub target_train_accuracy: f64,
    pub finetune_epochs: usize,
    pub optimizer: AdamConfig,
    pub batch_size: usize,
    pub confidence: ConfidenceMode,
    /// Start every fine-tuning round with fresh Adam moments.
    pub reset_optimizer: bool,
    pub seed: u64,
}

impl Default for RalConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            group_threshold: 4,
            iterations: 3,
            max_epochs: 18,
            target_train_accuracy: 98.0,
            finetune_epochs: 5,
            optimizer: AdamConfig::default(),
            batch_size: 64,
            confidence: ConfidenceMode::default(),
            reset_optimizer: false,
            seed: 0,
        }
    }
}

impl RalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau) {
            return Err(Error::InvalidConfig(format!(
                "tau must be in [0, 1), got {}",
                self.tau
            )));
        }
        if self.group_threshold > 8 {
            return Err(Error::InvalidConfig(format!(
                "group_threshold must be at most 8, got {}",
                self.group_threshold
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        let o = &self.optimizer;
        let finite_positive = |x: f64| x.is_finite() && x > 0.0;
        if !(o.lr == 0.0 || finite_positive(o.lr))
            || !(0.0..1.0).contains(&o.beta1)
            || !(0.0..1.0).contains(&o.beta2)
            || !finite_positive(o.epsilon)
        {
            return Err(Error::InvalidConfig(format!(
                "invalid Adam hyperparameters {o:?}"
            )));
        }
        Ok(())
    }

    /// Epochs spent when initial training runs to its cap.
    pub fn epoch_budget(&self) -> usize {
        self.max_epochs + self.iterations * self.finetune_epochs
    }
}
