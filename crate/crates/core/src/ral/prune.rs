use std::collections::{BTreeMap, HashMap};

use super::config::ConfidenceMode;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::patch::TrainingSet;
use crate::scalar::Scalar;
use crate::tensor::stack_images;

const SCORE_BATCH: usize = 64;

/// Softmax outputs for the active records, keyed by patch id.
pub fn predict_active<T: Scalar>(
    net: &Network<T>,
    set: &TrainingSet,
) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for chunk in set.active_indices().chunks(SCORE_BATCH) {
        let batch = stack_images::<T>(chunk.iter().map(|&i| set.pixels(i)))?;
        let probs = net.forward(&batch)?;
        for (&i, row) in chunk.iter().zip(probs.data().chunks_exact(net.classes())) {
            out.insert(
                set.records()[i].patch_id.clone(),
                row.iter().map(|v| v.as_f64()).collect(),
            );
        }
    }
    Ok(out)
}

/// Reduces a probability vector to a confidence in the record's label.
pub fn confidence(probabilities: &[f64], label: usize, mode: ConfidenceMode) -> f64 {
    match mode {
        ConfidenceMode::AssignedLabel => probabilities[label],
        ConfidenceMode::MaxProbability => probabilities.iter().copied().fold(0.0, f64::max),
    }
}

/// Confidence of every active record; inactive records are skipped.
pub fn score_training_set<T: Scalar>(
    net: &Network<T>,
    set: &TrainingSet,
    mode: ConfidenceMode,
) -> Result<BTreeMap<String, f64>> {
    Ok(scores_from_predictions(
        set,
        &predict_active(net, set)?,
        mode,
    ))
}

pub fn scores_from_predictions(
    set: &TrainingSet,
    predictions: &BTreeMap<String, Vec<f64>>,
    mode: ConfidenceMode,
) -> BTreeMap<String, f64> {
    predictions
        .iter()
        .filter_map(|(id, p)| {
            let record = set.record(id)?;
            Some((id.clone(), confidence(p, record.label.index(), mode)))
        })
        .collect()
}

/// Deactivates every active record scoring strictly below `tau` and returns
/// their ids in sorted order. Nothing changes if an active record lacks a score.
pub fn prune_by_confidence(
    set: &mut TrainingSet,
    scores: &BTreeMap<String, f64>,
    tau: f64,
) -> Result<Vec<String>> {
    let mut removed = Vec::new();
    for r in set.records().iter().filter(|r| r.active) {
        let score = scores
            .get(&r.patch_id)
            .ok_or_else(|| Error::MissingScore(r.patch_id.clone()))?;
        if *score < tau {
            removed.push(r.patch_id.clone());
        }
    }
    removed.sort();
    for id in &removed {
        set.deactivate(id)?;
    }
    Ok(removed)
}

/// For every group with more than `threshold` members in `removed`, deactivates
/// its remaining active members. Returns those ids, sorted.
pub fn prune_by_group(
    set: &mut TrainingSet,
    removed: &[String],
    threshold: usize,
) -> Result<Vec<String>> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for id in removed {
        let record = set.record(id).ok_or_else(|| Error::UnknownId(id.clone()))?;
        *counts.entry(record.group_id.clone()).or_insert(0) += 1;
    }
    let mut extra: Vec<String> = set
        .records()
        .iter()
        .filter(|r| r.active && counts.get(&r.group_id).is_some_and(|&n| n > threshold))
        .map(|r| r.patch_id.clone())
        .collect();
    extra.sort();
    for id in &extra {
        set.deactivate(id)?;
    }
    Ok(extra)
}
