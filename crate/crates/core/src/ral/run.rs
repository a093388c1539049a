use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::RalConfig;
use super::prune::{predict_active, prune_by_confidence, prune_by_group, scores_from_predictions};
use super::train::{finetune, initial_train, EpochLog, Trainer};
use crate::class::Class;
use crate::error::Result;
use crate::metrics::accuracy;
use crate::patch::{SlideImage, TrainingSet};
use crate::scalar::Scalar;
use crate::slice::{predict_slide, slice_accuracy, Aggregation, SlidePrediction};

/// Slides used to measure accuracy after every round.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation<'a> {
    pub train_slides: &'a [SlideImage],
    pub val_slides: &'a [SlideImage],
    /// Non-overlapping window for slide-level prediction.
    pub window: usize,
    pub aggregation: Aggregation,
}

/// Bookkeeping for one round; `k = 0` is the initial training.
/// Accuracies are macro-averaged percentages, absent when there was nothing to measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub k: usize,
    pub active_before: usize,
    pub removed_by_confidence: usize,
    pub removed_by_group: usize,
    pub active_after: usize,
    pub train_patch_acc: Option<f64>,
    pub val_patch_acc: Option<f64>,
    pub train_slice_acc: Option<f64>,
    pub val_slice_acc: Option<f64>,
    pub epochs_trained: usize,
    pub train_loss: Option<f64>,
}

impl IterationReport {
    pub fn reconciles(&self) -> bool {
        self.active_before
            .checked_sub(self.removed_by_confidence + self.removed_by_group)
            == Some(self.active_after)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RemovalReason {
    Confidence,
    Group,
}

impl RemovalReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RemovalReason::Confidence => "confidence",
            RemovalReason::Group => "group",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub iteration: usize,
    pub patch_id: String,
    pub reason: RemovalReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RalStatus {
    Completed,
    /// Pruning left no active records; the last report is the round that emptied the set.
    EmptyRefinedSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RalOutcome {
    pub status: RalStatus,
    pub reports: Vec<IterationReport>,
    pub audit: Vec<AuditEntry>,
    pub epochs: Vec<Vec<EpochLog>>,
    /// Slide predictions from the final round, train slides first.
    pub final_predictions: Vec<SlidePrediction>,
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_default()
}

impl RalOutcome {
    pub fn removed_ids(&self) -> impl Iterator<Item = &str> {
        self.audit.iter().map(|a| a.patch_id.as_str())
    }

    /// `iteration,active_count`, one row per round.
    pub fn table1_csv(&self) -> String {
        let mut s = String::from("iteration,active_count\n");
        for r in &self.reports {
            let _ = writeln!(s, "{},{}", r.k, r.active_after);
        }
        s
    }

    /// `iteration,patch_train,patch_val,slice_train,slice_val`; empty fields for missing values.
    pub fn table3_csv(&self) -> String {
        let mut s = String::from("iteration,patch_train,patch_val,slice_train,slice_val\n");
        for r in &self.reports {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.k,
                fmt_pct(r.train_patch_acc),
                fmt_pct(r.val_patch_acc),
                fmt_pct(r.train_slice_acc),
                fmt_pct(r.val_slice_acc)
            );
        }
        s
    }

    pub fn audit_csv(&self) -> String {
        let mut s = String::from("iteration,patch_id,reason\n");
        for a in &self.audit {
            let _ = writeln!(s, "{},{},{}", a.iteration, a.patch_id, a.reason.as_str());
        }
        s
    }
}

struct RoundEval {
    predictions: BTreeMap<String, Vec<f64>>,
    train_patch_acc: Option<f64>,
    val_patch_acc: Option<f64>,
    train_slice_acc: Option<f64>,
    val_slice_acc: Option<f64>,
    slides: Vec<SlidePrediction>,
}

fn argmax(p: &[f64]) -> usize {
    p.iter()
        .enumerate()
        .fold(0, |best, (i, &v)| if v > p[best] { i } else { best })
}

fn slide_accuracies(
    preds: &[SlidePrediction],
    slides: &[SlideImage],
) -> Result<(Option<f64>, Option<f64>)> {
    if preds.is_empty() {
        return Ok((None, None));
    }
    let truth: BTreeMap<String, Class> = slides
        .iter()
        .map(|s| (s.slide_id.clone(), s.label))
        .collect();
    let slice = slice_accuracy(preds, &truth)?.macro_pct;
    let cells = preds.iter().zip(slides).flat_map(|(p, s)| {
        p.patch_labels
            .iter()
            .map(move |c| (s.label.index(), c.index()))
    });
    Ok((Some(accuracy(cells)?.macro_pct), Some(slice)))
}

fn evaluate<T: Scalar>(
    trainer: &Trainer<T>,
    set: &TrainingSet,
    eval: &Evaluation,
) -> Result<RoundEval> {
    let predictions = predict_active(&trainer.net, set)?;
    let train_patch_acc = if predictions.is_empty() {
        None
    } else {
        let pairs = predictions.iter().map(|(id, p)| {
            let label = set.record(id).expect("scored records exist").label.index();
            (label, argmax(p))
        });
        Some(accuracy(pairs)?.macro_pct)
    };
    let predict = |slides: &[SlideImage]| -> Result<Vec<SlidePrediction>> {
        slides
            .iter()
            .map(|s| predict_slide(&trainer.net, s, eval.window, eval.aggregation))
            .collect()
    };
    let train_preds = predict(eval.train_slides)?;
    let val_preds = predict(eval.val_slides)?;
    let (_, train_slice_acc) = slide_accuracies(&train_preds, eval.train_slides)?;
    let (val_patch_acc, val_slice_acc) = slide_accuracies(&val_preds, eval.val_slides)?;
    let mut slides = train_preds;
    slides.extend(val_preds);
    Ok(RoundEval {
        predictions,
        train_patch_acc,
        val_patch_acc,
        train_slice_acc,
        val_slice_acc,
        slides,
    })
}

fn report(
    k: usize,
    before: usize,
    by_conf: usize,
    by_group: usize,
    after: usize,
    log: &[EpochLog],
    ev: &RoundEval,
) -> IterationReport {
    IterationReport {
        k,
        active_before: before,
        removed_by_confidence: by_conf,
        removed_by_group: by_group,
        active_after: after,
        train_patch_acc: ev.train_patch_acc,
        val_patch_acc: ev.val_patch_acc,
        train_slice_acc: ev.train_slice_acc,
        val_slice_acc: ev.val_slice_acc,
        epochs_trained: log.len(),
        train_loss: log.last().map(|e| e.loss),
    }
}

/// Initial training followed by `config.iterations` rounds of
/// score, prune by confidence, prune by group, fine-tune, evaluate.
pub fn run_ral<T: Scalar>(
    trainer: &mut Trainer<T>,
    set: &mut TrainingSet,
    eval: &Evaluation,
    config: &RalConfig,
) -> Result<RalOutcome> {
    config.validate()?;
    let log = initial_train(trainer, set, config)?;
    let mut ev = evaluate(trainer, set, eval)?;
    let active = set.active_count();
    let mut reports = vec![report(0, active, 0, 0, active, &log, &ev)];
    let mut epochs = vec![log];
    let mut audit = Vec::new();
    let mut status = RalStatus::Completed;

    for k in 1..=config.iterations {
        let before = set.active_count();
        let scores = scores_from_predictions(set, &ev.predictions, config.confidence);
        let by_conf = prune_by_confidence(set, &scores, config.tau)?;
        let by_group = prune_by_group(set, &by_conf, config.group_threshold)?;
        audit.extend(by_conf.iter().map(|id| AuditEntry {
            iteration: k,
            patch_id: id.clone(),
            reason: RemovalReason::Confidence,
        }));
        audit.extend(by_group.iter().map(|id| AuditEntry {
            iteration: k,
            patch_id: id.clone(),
            reason: RemovalReason::Group,
        }));
        let after = set.active_count();
        if after == 0 {
            ev = evaluate(trainer, set, eval)?;
            reports.push(report(
                k,
                before,
                by_conf.len(),
                by_group.len(),
                after,
                &[],
                &ev,
            ));
            epochs.push(Vec::new());
            status = RalStatus::EmptyRefinedSet;
            break;
        }
        let log = finetune(trainer, set, config)?;
        ev = evaluate(trainer, set, eval)?;
        reports.push(report(
            k,
            before,
            by_conf.len(),
            by_group.len(),
            after,
            &log,
            &ev,
        ));
        epochs.push(log);
    }
    Ok(RalOutcome {
        status,
        reports,
        audit,
        epochs,
        final_predictions: ev.slides,
    })
}
