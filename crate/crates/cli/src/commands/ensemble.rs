//! `mwr ensemble` — the five meta-strategies plus the joint fine-tune.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;

use mwr_core::data::{apply_normalization, parse_csv, stratified_split, Dataset};
use mwr_core::error::{Error, Result};
use mwr_core::eval::{confusion, fit_meta, mcc, mean_std, meta_predict, MetaKind, THRESHOLD};
use mwr_core::models::{load_checkpoint, write_atomic, Checkpoint, ModelKind};
use mwr_core::optim::{ContrastiveKind, TrainConfig};

use crate::runs::{ensure_run, RunSpec, TRAIN_FRAC, VAL_FRAC};

#[derive(Args)]
pub struct EnsembleArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// One seed's pre-trained checkpoints in the order lmwr rmwr gmwr;
    /// repeat the flag for more seeds.
    #[arg(long, num_args = 3, action = clap::ArgAction::Append, required = true)]
    pub sub_checkpoints: Vec<PathBuf>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Cap on the joint fine-tune epochs.
    #[arg(long)]
    pub max_epochs: Option<usize>,
}

/// Per-case sub-model score triples for one split.
fn sub_score_rows(
    checkpoints: &[&Checkpoint; 3],
    split: &Dataset,
) -> Result<Vec<[f64; 3]>> {
    let mut columns = Vec::with_capacity(3);
    for checkpoint in checkpoints {
        let features: Vec<_> = split
            .exams
            .iter()
            .map(|e| apply_normalization(e, &checkpoint.norm_stats))
            .collect();
        columns.push(checkpoint.bundle.scores(&features)?);
    }
    Ok((0..split.len())
        .map(|i| [columns[0][i], columns[1][i], columns[2][i]])
        .collect())
}

/// MCC of every meta strategy for one checkpoint triple.
pub fn meta_mccs_for_triple(
    triple: &[PathBuf; 3],
    dataset: &Dataset,
    split_seed: u64,
) -> Result<Vec<(MetaKind, f64)>> {
    let l = load_checkpoint(&triple[0])?;
    let r = load_checkpoint(&triple[1])?;
    let g = load_checkpoint(&triple[2])?;
    for (checkpoint, want) in [
        (&l, ModelKind::Lmwr),
        (&r, ModelKind::Rmwr),
        (&g, ModelKind::Gmwr),
    ] {
        if checkpoint.bundle.kind != want {
            return Err(Error::config(format!(
                "--sub-checkpoints must be ordered lmwr rmwr gmwr; found {}",
                checkpoint.bundle.kind
            )));
        }
    }
    let (train_split, _val, test_split) =
        stratified_split(dataset, TRAIN_FRAC, VAL_FRAC, split_seed)?;
    let checkpoints = [&l, &r, &g];
    let train_rows = sub_score_rows(&checkpoints, &train_split)?;
    let train_labels: Vec<f64> = train_split.exams.iter().map(|e| e.label.as_f64()).collect();
    let test_rows = sub_score_rows(&checkpoints, &test_split)?;
    let test_labels: Vec<f64> = test_split.exams.iter().map(|e| e.label.as_f64()).collect();

    let mut out = Vec::new();
    for kind in MetaKind::ALL {
        let clf = fit_meta(kind, &train_rows, &train_labels)?;
        let scores = meta_predict(&clf, &test_rows);
        let cm = confusion(&scores, &test_labels, THRESHOLD)?;
        out.push((kind, mcc(&cm)));
    }
    Ok(out)
}

pub struct EnsembleRow {
    pub method: String,
    pub mcc_mean: f64,
    pub mcc_std: f64,
}

/// Fig-7-style table: the fine-tuned joint model plus the five meta
/// strategies, MCC mean and std over the provided triples.
pub fn ensemble_table(
    runs_root: &Path,
    dataset: &Dataset,
    data_label: &str,
    triples: &[[PathBuf; 3]],
    split_seed: u64,
    max_epochs: Option<usize>,
) -> Result<Vec<EnsembleRow>> {
    let mut joint_mccs = Vec::new();
    let mut meta_mccs: Vec<Vec<(MetaKind, f64)>> = Vec::new();
    for triple in triples {
        let seed = load_checkpoint(&triple[0])?.seed;
        let mut config = TrainConfig::for_kind(ModelKind::Jmwr);
        config.seed = seed;
        if let Some(cap) = max_epochs {
            config.max_epochs = cap;
        }
        let spec = RunSpec {
            label: RunSpec::label_for(
                ModelKind::Jmwr,
                ContrastiveKind::None,
                seed,
                config.batch_size,
                1.0,
            ),
            config,
            split_seed,
            fraction: 1.0,
            sub_checkpoints: Some(triple.clone()),
        };
        let artifacts = ensure_run(runs_root, dataset, data_label, &spec)?;
        joint_mccs.push(artifacts.metrics.mcc);
        meta_mccs.push(meta_mccs_for_triple(triple, dataset, split_seed)?);
    }

    let mut rows = Vec::new();
    let (jm, js) = mean_std(&joint_mccs);
    rows.push(EnsembleRow { method: "jmwr".into(), mcc_mean: jm, mcc_std: js });
    for (k, kind) in MetaKind::ALL.iter().enumerate() {
        let values: Vec<f64> = meta_mccs.iter().map(|per| per[k].1).collect();
        let (mean, std) = mean_std(&values);
        rows.push(EnsembleRow { method: kind.to_string(), mcc_mean: mean, mcc_std: std });
    }
    Ok(rows)
}

pub fn write_ensemble_csv(path: &Path, rows: &[EnsembleRow]) -> Result<()> {
    let mut out = String::from("method,mcc_mean,mcc_std\n");
    for row in rows {
        let _ = writeln!(out, "{},{},{}", row.method, row.mcc_mean, row.mcc_std);
    }
    write_atomic(path, out.as_bytes())
}

pub fn run(args: EnsembleArgs) -> Result<()> {
    if args.sub_checkpoints.len() % 3 != 0 {
        return Err(Error::config(format!(
            "--sub-checkpoints takes triples (lmwr rmwr gmwr); got {} paths",
            args.sub_checkpoints.len()
        )));
    }
    let triples: Vec<[PathBuf; 3]> = args
        .sub_checkpoints
        .chunks(3)
        .map(|c| [c[0].clone(), c[1].clone(), c[2].clone()])
        .collect();
    let dataset = parse_csv(&args.data)?;
    let split_seed = args
        .split_seed
        .or_else(|| {
            load_checkpoint(&triples[0][0])
                .ok()
                .and_then(|c| super::eval::checkpoint_split_seed(&c))
        })
        .unwrap_or(1);
    let runs_root = args.out_dir.join("runs");
    let rows = ensemble_table(
        &runs_root,
        &dataset,
        &args.data.display().to_string(),
        &triples,
        split_seed,
        args.max_epochs,
    )?;
    let path = args.out_dir.join("ensemble.csv");
    write_ensemble_csv(&path, &rows)?;
    for row in &rows {
        println!("{:<14} mcc {:.4} ± {:.4}", row.method, row.mcc_mean, row.mcc_std);
    }
    println!("wrote {}", path.display());
    Ok(())
}
