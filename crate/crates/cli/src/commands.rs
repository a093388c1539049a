use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ral_core::nn::{checkpoint, Network, NetworkSpec};
use ral_core::patch::io::read_tensor;
use ral_core::patch::{
    build_manifest, build_training_set, load_dataset, save_slide, PatchRecord, SlideImage,
};
use ral_core::ral::{
    initial_train, run_ral, EpochLog, Evaluation, IterationReport, RalStatus, Trainer,
};
use ral_core::slice::{predict_pixels, predict_slide, render_class_map, SlidePrediction};
use ral_core::split::stratified_split;
use ral_core::synth::{generate, oracle_eval, MislabelOracle, OracleEval};
use ral_core::{metrics, Class, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::lock::OutputLock;

pub const ORACLE_FILE: &str = "oracle.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.ralw";
pub const NETWORK_FILE: &str = "network.json";
/// Pixels per grid cell in rendered class maps.
const CLASS_MAP_CELL: usize = 16;

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_split(cfg: &ExperimentConfig) -> Result<(Vec<SlideImage>, Vec<SlideImage>)> {
    let slides = load_dataset(&cfg.dataset_path)
        .with_context(|| format!("loading dataset {}", cfg.dataset_path.display()))?;
    Ok(stratified_split(slides, cfg.split, cfg.seed)?)
}

fn network_spec(cfg: &ExperimentConfig, slides: &[SlideImage]) -> Result<NetworkSpec> {
    let channels = slides
        .first()
        .map(SlideImage::channels)
        .unwrap_or(cfg.synth.channels);
    Ok(ral_core::nn::build_classifier(
        cfg.network.input_size,
        channels,
        cfg.network.channel_plan,
        cfg.network.classes,
    )?)
}

fn save_network(dir: &Path, net: &Network<f32>) -> Result<()> {
    checkpoint::save(&dir.join(CHECKPOINT_FILE), net.params())?;
    write_json(&dir.join(NETWORK_FILE), net.spec())
}

/// Loads a checkpoint and the `network.json` next to it.
pub fn load_network(checkpoint_path: &Path) -> Result<Network<f32>> {
    let spec_path = checkpoint_path.with_file_name(NETWORK_FILE);
    let spec: NetworkSpec = read_json(&spec_path)?;
    let params = checkpoint::load(checkpoint_path)?;
    Network::from_params(spec, params)
        .with_context(|| format!("checkpoint {}", checkpoint_path.display()))
}

fn slide_ids(slides: &[SlideImage]) -> Vec<String> {
    slides.iter().map(|s| s.slide_id.clone()).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub dataset_path: PathBuf,
    pub slides: usize,
    pub mislabeled_groups: usize,
}

/// Writes a synthetic dataset (class directories of pixmaps plus `oracle.json`).
pub fn cmd_generate(cfg: &ExperimentConfig) -> Result<GenerateSummary> {
    let root = &cfg.dataset_path;
    if root.exists() && std::fs::read_dir(root)?.next().is_some() {
        bail!("dataset directory {} is not empty", root.display());
    }
    let data = generate(&cfg.synth)?;
    let ext = if cfg.synth.channels == 1 {
        "pgm"
    } else {
        "ppm"
    };
    for slide in &data.slides {
        save_slide(root, slide, ext)?;
    }
    data.oracle.save(&root.join(ORACLE_FILE))?;
    Ok(GenerateSummary {
        dataset_path: root.clone(),
        slides: data.slides.len(),
        mislabeled_groups: data.oracle.mislabeled_groups(),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub train_slides: Vec<String>,
    pub val_slides: Vec<String>,
    pub records: Vec<PatchRecord>,
}

pub fn cmd_tile(cfg: &ExperimentConfig) -> Result<Manifest> {
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let (train, val) = load_split(cfg)?;
    let metas: Vec<_> = train.iter().map(SlideImage::meta).collect();
    let manifest = Manifest {
        config: cfg.clone(),
        train_slides: slide_ids(&train),
        val_slides: slide_ids(&val),
        records: build_manifest(&metas, &cfg.tiling)?,
    };
    write_json(&cfg.output_dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub records: usize,
    pub epochs: Vec<EpochLog>,
}

/// Initial training only; writes the checkpoint and `train_log.json`.
pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainReport> {
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let (train, _) = load_split(cfg)?;
    let set = build_training_set(&train, &cfg.tiling, cfg.network.classes)?;
    let net = Network::new(network_spec(cfg, &train)?, cfg.seed)?;
    let mut trainer = Trainer::new(net, &cfg.ral);
    let epochs = initial_train(&mut trainer, &set, &cfg.ral)?;
    save_network(&cfg.output_dir, &trainer.net)?;
    let report = TrainReport {
        config: cfg.clone(),
        seed: cfg.seed,
        records: set.len(),
        epochs,
    };
    write_json(&cfg.output_dir.join("train_log.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideOutcome {
    pub slide_id: String,
    pub split: String,
    pub label: Class,
    pub predicted: Class,
    pub tie_broken: bool,
    pub vote_counts: BTreeMap<Class, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RalReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub status: RalStatus,
    pub iterations: Vec<IterationReport>,
    pub epochs: Vec<Vec<EpochLog>>,
    /// Present when the dataset carries a mislabel oracle.
    pub oracle: Option<OracleEval>,
    pub slides: Vec<SlideOutcome>,
}

fn slide_outcomes(preds: &[SlidePrediction], slides: &[(&SlideImage, &str)]) -> Vec<SlideOutcome> {
    preds
        .iter()
        .zip(slides)
        .map(|(p, (s, split))| SlideOutcome {
            slide_id: p.slide_id.clone(),
            split: split.to_string(),
            label: s.label,
            predicted: p.voted_label,
            tie_broken: p.tie_broken,
            vote_counts: p.vote_counts.clone(),
        })
        .collect()
}

fn class_map_path(dir: &Path, slide_id: &str) -> PathBuf {
    dir.join(format!("classmap_{slide_id}.ppm"))
}

fn save_class_map(dir: &Path, pred: &SlidePrediction) -> Result<()> {
    let path = class_map_path(dir, &pred.slide_id);
    ral_core::patch::io::write_tensor(&path, &render_class_map(pred, CLASS_MAP_CELL))?;
    Ok(())
}

/// Full refinement run. Writes `report.json`, `table1.csv`, `table3.csv`,
/// `audit.csv`, the final checkpoint and class maps of the validation slides.
pub fn cmd_ral(cfg: &ExperimentConfig) -> Result<RalReport> {
    let out = &cfg.output_dir;
    let _lock = OutputLock::acquire(out)?;
    let (train, val) = load_split(cfg)?;
    let mut set = build_training_set(&train, &cfg.tiling, cfg.network.classes)?;
    let population = set.records().to_vec();
    let net = Network::new(network_spec(cfg, &train)?, cfg.seed)?;
    let mut trainer = Trainer::new(net, &cfg.ral);
    let eval = Evaluation {
        train_slides: &train,
        val_slides: &val,
        window: cfg.slice_window,
        aggregation: cfg.aggregation,
    };
    let outcome = run_ral(&mut trainer, &mut set, &eval, &cfg.ral)?;

    let oracle_path = cfg.dataset_path.join(ORACLE_FILE);
    let oracle = if oracle_path.exists() {
        let oracle = MislabelOracle::load(&oracle_path)?;
        Some(oracle_eval(outcome.removed_ids(), &population, &oracle)?)
    } else {
        None
    };
    let tagged: Vec<(&SlideImage, &str)> = train
        .iter()
        .map(|s| (s, "train"))
        .chain(val.iter().map(|s| (s, "val")))
        .collect();
    let report = RalReport {
        config: cfg.clone(),
        seed: cfg.seed,
        status: outcome.status,
        iterations: outcome.reports.clone(),
        epochs: outcome.epochs.clone(),
        oracle,
        slides: slide_outcomes(&outcome.final_predictions, &tagged),
    };
    write_json(&out.join("report.json"), &report)?;
    write(&out.join("table1.csv"), outcome.table1_csv())?;
    write(&out.join("table3.csv"), outcome.table3_csv())?;
    write(&out.join("audit.csv"), outcome.audit_csv())?;
    save_network(out, &trainer.net)?;
    for pred in &outcome.final_predictions[train.len()..] {
        save_class_map(out, pred)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitScores {
    pub slides: usize,
    pub patch_aca: f64,
    pub patch_accuracy: f64,
    pub slice_aca: f64,
    pub slice_accuracy: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub checkpoint: PathBuf,
    pub train: Option<SplitScores>,
    pub val: Option<SplitScores>,
    pub slides: Vec<SlideOutcome>,
}

fn split_scores(preds: &[SlidePrediction], slides: &[SlideImage]) -> Result<Option<SplitScores>> {
    if slides.is_empty() {
        return Ok(None);
    }
    let cells = metrics::accuracy(preds.iter().zip(slides).flat_map(|(p, s)| {
        p.patch_labels
            .iter()
            .map(move |c| (s.label.index(), c.index()))
    }))?;
    let slice = metrics::accuracy(
        preds
            .iter()
            .zip(slides)
            .map(|(p, s)| (s.label.index(), p.voted_label.index())),
    )?;
    Ok(Some(SplitScores {
        slides: slides.len(),
        patch_aca: cells.macro_pct,
        patch_accuracy: cells.plain_pct,
        slice_aca: slice.macro_pct,
        slice_accuracy: slice.plain_pct,
    }))
}

/// Patch and slide accuracy of a checkpoint on both halves of the split.
pub fn cmd_eval(cfg: &ExperimentConfig, checkpoint_path: &Path) -> Result<EvalReport> {
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let net = load_network(checkpoint_path)?;
    let (train, val) = load_split(cfg)?;
    let predict = |slides: &[SlideImage]| -> Result<Vec<SlidePrediction>> {
        Ok(slides
            .iter()
            .map(|s| predict_slide(&net, s, cfg.slice_window, cfg.aggregation))
            .collect::<ral_core::Result<_>>()?)
    };
    let (tp, vp) = (predict(&train)?, predict(&val)?);
    let tagged: Vec<(&SlideImage, &str)> = train
        .iter()
        .map(|s| (s, "train"))
        .chain(val.iter().map(|s| (s, "val")))
        .collect();
    let all: Vec<SlidePrediction> = tp.iter().chain(&vp).cloned().collect();
    let report = EvalReport {
        checkpoint: checkpoint_path.to_path_buf(),
        train: split_scores(&tp, &train)?,
        val: split_scores(&vp, &val)?,
        slides: slide_outcomes(&all, &tagged),
    };
    write_json(&cfg.output_dir.join("eval.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictReport {
    pub prediction: SlidePrediction,
    pub class_map: PathBuf,
}

/// Classifies one image and writes its class map.
pub fn cmd_predict_slide(
    cfg: &ExperimentConfig,
    checkpoint_path: &Path,
    image: &Path,
) -> Result<PredictReport> {
    let _lock = OutputLock::acquire(&cfg.output_dir)?;
    let net = load_network(checkpoint_path)?;
    let pixels: Tensor<f32> = read_tensor(image)?;
    let slide_id = image
        .file_stem()
        .and_then(|s| s.to_str())
        .with_context(|| format!("no usable file name in {}", image.display()))?;
    let prediction = predict_pixels(&net, slide_id, &pixels, cfg.slice_window, cfg.aggregation)?;
    save_class_map(&cfg.output_dir, &prediction)?;
    let report = PredictReport {
        class_map: class_map_path(&cfg.output_dir, slide_id),
        prediction,
    };
    write_json(
        &cfg.output_dir.join(format!("prediction_{slide_id}.json")),
        &report,
    )?;
    Ok(report)
}
