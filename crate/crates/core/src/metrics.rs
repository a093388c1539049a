use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Classification accuracy in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    /// Mean over classes present in the ground truth of within-class accuracy.
    pub macro_pct: f64,
    /// Fraction of all samples classified correctly.
    pub plain_pct: f64,
    pub samples: usize,
}

/// Accuracy over `(truth, predicted)` class-index pairs.
pub fn accuracy(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Accuracy> {
    let mut per_class: Vec<(usize, usize)> = Vec::new();
    let (mut correct, mut total) = (0, 0);
    for (truth, pred) in pairs {
        if per_class.len() <= truth {
            per_class.resize(truth + 1, (0, 0));
        }
        let slot = &mut per_class[truth];
        slot.1 += 1;
        total += 1;
        if truth == pred {
            slot.0 += 1;
            correct += 1;
        }
    }
    if total == 0 {
        return Err(Error::InvalidConfig("accuracy of an empty sample".into()));
    }
    let present: Vec<f64> = per_class
        .iter()
        .filter(|(_, n)| *n > 0)
        .map(|&(c, n)| c as f64 / n as f64)
        .collect();
    Ok(Accuracy {
        macro_pct: 100.0 * present.iter().sum::<f64>() / present.len() as f64,
        plain_pct: 100.0 * correct as f64 / total as f64,
        samples: total,
    })
}
