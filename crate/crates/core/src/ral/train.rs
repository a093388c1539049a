use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RalConfig;
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, Network};
use crate::patch::TrainingSet;
use crate::scalar::Scalar;
use crate::tensor::stack_images;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean sample loss over the epoch.
    pub loss: f64,
    /// Running training accuracy (percent) over the epoch's mini-batches.
    pub accuracy: f64,
    pub samples: usize,
}

pub type TrainLog = Vec<EpochLog>;

/// Network, optimizer state and the shuffling stream; persists across rounds.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub net: Network<T>,
    pub optimizer: AdamState<T>,
    rng: ChaCha8Rng,
    epochs_run: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(net: Network<T>, config: &RalConfig) -> Self {
        let optimizer = AdamState::new(net.params(), config.optimizer);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        Self {
            net,
            optimizer,
            rng,
            epochs_run: 0,
        }
    }

    pub fn epochs_run(&self) -> usize {
        self.epochs_run
    }

    /// One pass over the active records in seeded random order.
    pub fn train_epoch(&mut self, set: &TrainingSet, batch_size: usize) -> Result<EpochLog> {
        let mut order = set.active_indices();
        if order.is_empty() {
            return Err(Error::EmptyActiveSet);
        }
        order.shuffle(&mut self.rng);
        let (mut loss_sum, mut hits) = (0.0, 0);
        for chunk in order.chunks(batch_size.max(1)) {
            let batch = stack_images::<T>(chunk.iter().map(|&i| set.pixels(i)))?;
            let labels: Vec<usize> = chunk
                .iter()
                .map(|&i| set.records()[i].label.index())
                .collect();
            let (loss, grads, h) = self.net.backward_with_hits(&batch, &labels)?;
            adam_step(self.net.params_mut(), &grads, &mut self.optimizer)?;
            loss_sum += loss.as_f64() * chunk.len() as f64;
            hits += h;
        }
        self.epochs_run += 1;
        Ok(EpochLog {
            epoch: self.epochs_run,
            loss: loss_sum / order.len() as f64,
            accuracy: 100.0 * hits as f64 / order.len() as f64,
            samples: order.len(),
        })
    }
}

/// Trains until an epoch reaches `target_train_accuracy` or `max_epochs` have run.
pub fn initial_train<T: Scalar>(
    trainer: &mut Trainer<T>,
    set: &TrainingSet,
    config: &RalConfig,
) -> Result<TrainLog> {
    config.validate()?;
    if set.active_count() == 0 {
        return Err(Error::EmptyActiveSet);
    }
    let mut log = Vec::new();
    for _ in 0..config.max_epochs {
        let epoch = trainer.train_epoch(set, config.batch_size)?;
        log.push(epoch);
        if epoch.accuracy >= config.target_train_accuracy {
            break;
        }
    }
    Ok(log)
}

/// Continues training on the active records for `finetune_epochs`.
pub fn finetune<T: Scalar>(
    trainer: &mut Trainer<T>,
    set: &TrainingSet,
    config: &RalConfig,
) -> Result<TrainLog> {
    config.validate()?;
    if set.active_count() == 0 {
        return Err(Error::EmptyActiveSet);
    }
    if config.reset_optimizer {
        trainer.optimizer.reset();
    }
    (0..config.finetune_epochs)
        .map(|_| trainer.train_epoch(set, config.batch_size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::class::Class;
    use crate::nn::{Activation, Dims, LayerSpec, NetworkSpec};
    use crate::patch::{build_training_set, SlideImage, TilingSpec};
    use crate::tensor::Tensor;

    // Two classes: dark vs bright 4x4 grayscale slides with a mild gradient.
    pub(crate) fn separable_set() -> TrainingSet {
        let mut slides = Vec::new();
        for i in 0..6 {
            for (class, base) in [(Class::Normal, 0.2f32), (Class::Benign, 0.7)] {
                let data = (0..16)
                    .map(|p| base + 0.01 * (p as f32) + 0.02 * i as f32)
                    .collect();
                slides.push(SlideImage {
                    slide_id: format!("{class}{i}"),
                    label: class,
                    pixels: Tensor::new(vec![4, 4, 1], data).unwrap(),
                });
            }
        }
        build_training_set(&slides, &TilingSpec::new(4, 4).unwrap(), 2).unwrap()
    }

    pub(crate) fn linear_net(seed: u64) -> Network<f32> {
        let spec = NetworkSpec {
            input: Dims::new(4, 4, 1),
            layers: vec![
                LayerSpec::conv(1, 4),
                LayerSpec::AvgPool,
                LayerSpec::Dense {
                    units: 2,
                    activation: Activation::None,
                },
            ],
            classes: 2,
        };
        Network::new(spec, seed).unwrap()
    }

    fn fast_config() -> RalConfig {
        RalConfig {
            max_epochs: 200,
            target_train_accuracy: 100.0,
            batch_size: 16,
            optimizer: crate::nn::AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn separable_set_reaches_full_accuracy_before_cap() {
        let set = separable_set();
        let cfg = fast_config();
        let mut t = Trainer::new(linear_net(1), &cfg);
        let log = initial_train(&mut t, &set, &cfg).unwrap();
        assert_eq!(log.last().unwrap().accuracy, 100.0);
        assert!(log.len() < cfg.max_epochs, "took {} epochs", log.len());
        assert!(log.iter().all(|e| e.loss.is_finite()));
    }

    #[test]
    fn zero_epochs_changes_nothing() {
        let set = separable_set();
        let cfg = RalConfig {
            max_epochs: 0,
            finetune_epochs: 0,
            ..fast_config()
        };
        let mut t = Trainer::new(linear_net(2), &cfg);
        let before = t.net.clone();
        assert!(initial_train(&mut t, &set, &cfg).unwrap().is_empty());
        assert!(finetune(&mut t, &set, &cfg).unwrap().is_empty());
        assert_eq!(t.net, before);
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let set = separable_set();
        let mut cfg = fast_config();
        cfg.optimizer.lr = 0.0;
        cfg.finetune_epochs = 2;
        let mut t = Trainer::new(linear_net(3), &cfg);
        let before = t.net.clone();
        let log = finetune(&mut t, &set, &cfg).unwrap();
        assert_eq!(log.len(), 2);
        assert_eq!(t.net, before);
    }

    #[test]
    fn same_seed_same_parameters() {
        let set = separable_set();
        let cfg = RalConfig {
            max_epochs: 5,
            ..fast_config()
        };
        let run = |seed| {
            let cfg = RalConfig {
                seed,
                ..cfg.clone()
            };
            let mut t = Trainer::new(linear_net(4), &cfg);
            initial_train(&mut t, &set, &cfg).unwrap();
            t.net
        };
        assert_eq!(run(7), run(7));
        assert_ne!(run(7), run(8));
    }

    #[test]
    fn empty_set_is_rejected() {
        let mut set = separable_set();
        let ids: Vec<String> = set.records().iter().map(|r| r.patch_id.clone()).collect();
        for id in ids {
            set.deactivate(&id).unwrap();
        }
        let cfg = fast_config();
        let mut t = Trainer::new(linear_net(5), &cfg);
        assert!(matches!(
            initial_train(&mut t, &set, &cfg),
            Err(Error::EmptyActiveSet)
        ));
        assert!(matches!(
            finetune(&mut t, &set, &cfg),
            Err(Error::EmptyActiveSet)
        ));
    }

    #[test]
    fn optimizer_state_carries_over_unless_reset() {
        let set = separable_set();
        let cfg = RalConfig {
            max_epochs: 2,
            finetune_epochs: 1,
            ..fast_config()
        };
        let mut t = Trainer::new(linear_net(6), &cfg);
        initial_train(&mut t, &set, &cfg).unwrap();
        let steps = t.optimizer.step;
        finetune(&mut t, &set, &cfg).unwrap();
        assert_eq!(t.optimizer.step, steps + 6);
        let reset = RalConfig {
            reset_optimizer: true,
            ..cfg
        };
        finetune(&mut t, &set, &reset).unwrap();
        assert_eq!(t.optimizer.step, 6);
    }
}
