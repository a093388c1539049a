use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use ral_cli::commands::CHECKPOINT_FILE;
use ral_cli::{
    cmd_eval, cmd_generate, cmd_predict_slide, cmd_ral, cmd_tile, cmd_train, ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "ral",
    version,
    about = "Confidence-based training set refinement for patch classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON). Omitted keys take the desk preset values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with a mislabel oracle.
    Generate(Common),
    /// Write the patch manifest of the training split.
    Tile(Common),
    /// Initial training only.
    Train(Common),
    /// Train, refine and fine-tune; write reports.
    Ral(Common),
    /// Patch and slide accuracy of a checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to checkpoint.ralw in the output directory.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Classify one image and render its class map.
    PredictSlide {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        image: PathBuf,
    },
}

fn config(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    cfg.resolve(common.seed, common.out.clone())
}

fn fmt_pct(v: Option<f64>) -> String {
    v.map(|v| format!("{v:6.2}"))
        .unwrap_or_else(|| "     -".into())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(common) => {
            let s = cmd_generate(&config(&common)?)?;
            println!(
                "wrote {} slides to {} ({} mislabeled groups)",
                s.slides,
                s.dataset_path.display(),
                s.mislabeled_groups
            );
        }
        Command::Tile(common) => {
            let m = cmd_tile(&config(&common)?)?;
            println!(
                "{} records from {} training slides ({} validation slides)",
                m.records.len(),
                m.train_slides.len(),
                m.val_slides.len()
            );
        }
        Command::Train(common) => {
            let r = cmd_train(&config(&common)?)?;
            for e in &r.epochs {
                println!(
                    "epoch {:3}  loss {:.4}  accuracy {:6.2}",
                    e.epoch, e.loss, e.accuracy
                );
            }
        }
        Command::Ral(common) => {
            let r = cmd_ral(&config(&common)?)?;
            println!("   k  active  patch_train  patch_val  slice_train  slice_val");
            for it in &r.iterations {
                println!(
                    "{:4}  {:6}       {}     {}       {}     {}",
                    it.k,
                    it.active_after,
                    fmt_pct(it.train_patch_acc),
                    fmt_pct(it.val_patch_acc),
                    fmt_pct(it.train_slice_acc),
                    fmt_pct(it.val_slice_acc)
                );
            }
            if let Some(o) = r.oracle {
                println!(
                    "mislabel recall {:.3}, clean false removal rate {:.3}",
                    o.mislabel_recall, o.clean_false_removal_rate
                );
            }
            println!("status: {:?}", r.status);
        }
        Command::Eval { common, checkpoint } => {
            let cfg = config(&common)?;
            let path = checkpoint.unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE));
            let r = cmd_eval(&cfg, &path)?;
            for (name, scores) in [("train", &r.train), ("val", &r.val)] {
                if let Some(s) = scores {
                    println!(
                        "{name:5}  slides {:3}  patch ACA {:6.2}  slice ACA {:6.2}",
                        s.slides, s.patch_aca, s.slice_aca
                    );
                }
            }
        }
        Command::PredictSlide {
            common,
            checkpoint,
            image,
        } => {
            let cfg = config(&common)?;
            let path = checkpoint.unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE));
            let r = cmd_predict_slide(&cfg, &path, &image)?;
            let p = &r.prediction;
            println!(
                "{}: {}{}  votes {:?}",
                p.slide_id,
                p.voted_label,
                if p.tie_broken { " (tie broken)" } else { "" },
                p.vote_counts
            );
            println!("class map: {}", r.class_map.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
