//! `mwr eval`

use std::path::PathBuf;

use clap::Args;

use mwr_core::data::{apply_normalization, parse_csv, stratified_split, Dataset};
use mwr_core::error::{Error, Result};
use mwr_core::eval::evaluate_scores;
use mwr_core::models::{load_checkpoint, Checkpoint};

use crate::runs::{config_hash, write_json_atomic, RunMetrics, TRAIN_FRAC, VAL_FRAC};

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Which split to evaluate: train, val, test, or all.
    #[arg(long, default_value = "test")]
    pub split: String,
    /// Split seed; defaults to the one recorded in the checkpoint config.
    #[arg(long)]
    pub split_seed: Option<u64>,
}

/// The split seed the checkpoint was trained with, when recorded.
pub fn checkpoint_split_seed(checkpoint: &Checkpoint) -> Option<u64> {
    checkpoint.config.get("split_seed").and_then(|v| v.as_u64())
}

pub fn select_split(dataset: &Dataset, which: &str, split_seed: u64) -> Result<Dataset> {
    if which == "all" {
        return Ok(dataset.clone());
    }
    let (train, val, test) = stratified_split(dataset, TRAIN_FRAC, VAL_FRAC, split_seed)?;
    match which {
        "train" => Ok(train),
        "val" => Ok(val),
        "test" => Ok(test),
        other => Err(Error::invalid(format!(
            "unknown split `{other}` (expected train, val, test, or all)"
        ))),
    }
}

pub fn run(args: EvalArgs) -> Result<()> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let dataset = parse_csv(&args.data)?;
    let split_seed = args
        .split_seed
        .or_else(|| checkpoint_split_seed(&checkpoint))
        .unwrap_or(1);
    let split = select_split(&dataset, &args.split, split_seed)?;
    let metrics = evaluate_split(&checkpoint, &split)?;
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;
    write_json_atomic(&args.out_dir.join("metrics.json"), &metrics)?;
    println!(
        "{} on {} ({} cases): mcc {:.4}, accuracy {:.4}, roc_auc {:.4}",
        metrics.model,
        args.split,
        split.len(),
        metrics.mcc,
        metrics.accuracy,
        metrics.roc_auc
    );
    Ok(())
}

pub fn evaluate_split(checkpoint: &Checkpoint, split: &Dataset) -> Result<RunMetrics> {
    let features: Vec<_> = split
        .exams
        .iter()
        .map(|e| apply_normalization(e, &checkpoint.norm_stats))
        .collect();
    let labels: Vec<f64> = split.exams.iter().map(|e| e.label.as_f64()).collect();
    let scores = checkpoint.bundle.scores(&features)?;
    let seed_metrics = evaluate_scores(&scores, &labels, checkpoint.seed)?;
    Ok(RunMetrics {
        model: checkpoint.bundle.kind.to_string(),
        seed: checkpoint.seed,
        mcc: seed_metrics.mcc,
        accuracy: seed_metrics.accuracy,
        roc_auc: seed_metrics.roc_auc,
        config_hash: config_hash(&checkpoint.config),
    })
}
