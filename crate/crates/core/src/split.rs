use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::class::Class;
use crate::error::{Error, Result};
use crate::patch::SlideImage;

/// Train:validation proportion, e.g. 80:20.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatio {
    pub train: u32,
    pub val: u32,
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self { train: 80, val: 20 }
    }
}

impl SplitRatio {
    pub fn validate(&self) -> Result<()> {
        if self.train == 0 {
            return Err(Error::InvalidConfig(
                "split needs a non-zero training share".into(),
            ));
        }
        Ok(())
    }

    /// Validation count for a class with `n` slides: `round(n * val / (train + val))`,
    /// leaving at least one training slide.
    pub fn val_count(&self, n: usize) -> usize {
        let share = self.val as f64 / (self.train + self.val) as f64;
        ((n as f64 * share).round() as usize).min(n.saturating_sub(1))
    }
}

/// Seeded per-class split by slide, so all patches of a slide share a side.
/// Both halves come back ordered by class, then slide id.
pub fn stratified_split(
    slides: Vec<SlideImage>,
    ratio: SplitRatio,
    seed: u64,
) -> Result<(Vec<SlideImage>, Vec<SlideImage>)> {
    ratio.validate()?;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    let mut by_class: Vec<Vec<SlideImage>> = vec![Vec::new(); Class::ALL.len()];
    for s in slides {
        by_class[s.label.index()].push(s);
    }
    for (ci, mut group) in by_class.into_iter().enumerate() {
        group.sort_by(|a, b| a.slide_id.cmp(&b.slide_id));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(ci as u64);
        let mut order: Vec<usize> = (0..group.len()).collect();
        order.shuffle(&mut rng);
        let n_val = ratio.val_count(group.len());
        let mut is_val = vec![false; group.len()];
        for &i in &order[..n_val] {
            is_val[i] = true;
        }
        for (s, v) in group.into_iter().zip(is_val) {
            if v {
                val.push(s);
            } else {
                train.push(s);
            }
        }
    }
    Ok((train, val))
}
