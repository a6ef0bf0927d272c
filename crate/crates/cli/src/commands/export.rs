//! `mwr export-embeddings`

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;

use mwr_core::data::{apply_normalization, parse_csv};
use mwr_core::error::{Error, Result};
use mwr_core::eval::{embedding_distance_stats, THRESHOLD};
use mwr_core::models::{load_checkpoint, write_atomic};

use crate::commands::eval::{checkpoint_split_seed, select_split};
use crate::runs::write_json_atomic;

#[derive(Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long)]
    pub split_seed: Option<u64>,
}

pub fn run(args: ExportArgs) -> Result<()> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let dataset = parse_csv(&args.data)?;
    let split_seed = args
        .split_seed
        .or_else(|| checkpoint_split_seed(&checkpoint))
        .unwrap_or(1);
    let split = select_split(&dataset, &args.split, split_seed)?;

    let features: Vec<_> = split
        .exams
        .iter()
        .map(|e| apply_normalization(e, &checkpoint.norm_stats))
        .collect();
    let labels: Vec<f64> = split.exams.iter().map(|e| e.label.as_f64()).collect();
    let (scores, embeddings) = checkpoint.bundle.scores_and_embeddings(&features)?;

    let dim = checkpoint.bundle.kind.embedding_dim();
    let mut csv = String::from("id,label,correct");
    for k in 0..dim {
        let _ = write!(csv, ",e{k}");
    }
    csv.push('\n');
    for (i, exam) in split.exams.iter().enumerate() {
        let correct = (scores[i] >= THRESHOLD) == (labels[i] >= 0.5);
        let _ = write!(csv, "{},{},{}", exam.id, exam.label.as_u8(), u8::from(correct));
        for v in &embeddings[i] {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;
    write_atomic(&args.out_dir.join("embeddings.csv"), csv.as_bytes())?;

    let stats = embedding_distance_stats(&embeddings, &labels)?;
    write_json_atomic(&args.out_dir.join("embedding_stats.json"), &stats)?;
    println!(
        "exported {} x {dim} embeddings; within {:.3} ± {:.3}, between {:.3} ± {:.3}",
        split.len(),
        stats.within_mean,
        stats.within_std,
        stats.between_mean,
        stats.between_std
    );
    Ok(())
}
