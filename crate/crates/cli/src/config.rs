use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ral_core::nn::{build_classifier, AdamConfig, ChannelPlan, NetworkSpec};
use ral_core::patch::TilingSpec;
use ral_core::ral::RalConfig;
use ral_core::slice::Aggregation;
use ral_core::split::SplitRatio;
use ral_core::synth::SynthSpec;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Side of the square patches the network accepts; must equal the tiling window.
    pub input_size: usize,
    pub channel_plan: ChannelPlan,
    pub classes: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_size: 32,
            channel_plan: ChannelPlan::DESK,
            classes: 4,
        }
    }
}

/// Everything a command needs. The defaults are the desk-scale preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Dataset root with one directory per class. Written by `generate`, read by the rest.
    pub dataset_path: PathBuf,
    pub output_dir: PathBuf,
    /// Master seed; drives generation, the split, initialization and shuffling.
    pub seed: u64,
    pub split: SplitRatio,
    /// Training tiling (overlapping).
    pub tiling: TilingSpec,
    /// Window of the non-overlapping slide-level tiling.
    pub slice_window: usize,
    pub aggregation: Aggregation,
    pub network: NetworkConfig,
    pub ral: RalConfig,
    pub synth: SynthSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset_path: PathBuf::from("data"),
            output_dir: PathBuf::from("out"),
            seed: 0,
            split: SplitRatio::default(),
            tiling: TilingSpec {
                window: 32,
                stride: 16,
            },
            slice_window: 32,
            aggregation: Aggregation::default(),
            network: NetworkConfig::default(),
            ral: RalConfig {
                optimizer: AdamConfig {
                    lr: 1e-3,
                    ..AdamConfig::default()
                },
                ..RalConfig::default()
            },
            synth: SynthSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies overrides, pushes the master seed into every seeded component and validates.
    pub fn resolve(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Result<Self> {
        if let Some(seed) = seed {
            self.seed = seed;
        }
        if let Some(out) = out {
            self.output_dir = out;
        }
        self.ral.seed = self.seed;
        self.synth.seed = self.seed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.tiling.validate()?;
        self.ral.validate()?;
        self.synth.validate()?;
        if self.network.input_size != self.tiling.window {
            bail!(
                "network.input_size ({}) must equal tiling.window ({})",
                self.network.input_size,
                self.tiling.window
            );
        }
        if self.slice_window != self.tiling.window {
            bail!(
                "slice_window ({}) must equal tiling.window ({})",
                self.slice_window,
                self.tiling.window
            );
        }
        if self.synth.classes != self.network.classes {
            bail!(
                "synth.classes ({}) and network.classes ({}) differ",
                self.synth.classes,
                self.network.classes
            );
        }
        self.network_spec()?;
        Ok(())
    }

    pub fn network_spec(&self) -> Result<NetworkSpec> {
        Ok(build_classifier(
            self.network.input_size,
            self.synth.channels,
            self.network.channel_plan,
            self.network.classes,
        )?)
    }
}
