//! `mwr sweep` — batch-size, training-fraction, and robustness sweeps.
//!
//! Every (grid point, seed) pair is one resumable run directory keyed by
//! its configuration, so re-running a sweep (or overlapping it with the
//! full protocol) never retrains a completed cell.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;

use mwr_core::data::{parse_csv, stratified_split, Dataset};
use mwr_core::error::{Error, Result};
use mwr_core::eval::{mean_std, robustness_sweep, default_robustness_grids};
use mwr_core::models::{load_checkpoint, write_atomic, ModelKind};
use mwr_core::optim::{ContrastiveKind, TrainConfig};

use crate::parallel::{default_threads, parallel_for_each};
use crate::runs::{ensure_run_with_subs, RunMetrics, RunSpec, TRAIN_FRAC, VAL_FRAC};

pub const BATCH_GRID: [usize; 8] = [1, 2, 4, 8, 16, 32, 64, 128];
pub const FRACTION_GRID: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Args)]
pub struct SweepArgs {
    /// Sweep kind: batch, fraction, or robustness.
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Training seeds averaged per grid cell.
    #[arg(long, default_value = "1,2,3")]
    pub seeds: String,
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
    /// Cap on training epochs (handy for quick runs).
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Batch-wise loss for the trained models.
    #[arg(long)]
    pub contrastive: Option<String>,
    #[arg(long)]
    pub threads: Option<usize>,
}

fn base_config(
    model: ModelKind,
    seed: u64,
    contrastive: ContrastiveKind,
    max_epochs: Option<usize>,
) -> TrainConfig {
    let mut config = TrainConfig::for_kind(model);
    config.seed = seed;
    // Batch-wise losses attach to sub-model pre-training only; the joint
    // fine-tune itself runs without the term.
    config.contrastive = if model == ModelKind::Jmwr { ContrastiveKind::None } else { contrastive };
    if let Some(cap) = max_epochs {
        config.max_epochs = cap;
    }
    config
}

/// One sweep cell: train per seed (resumable), then aggregate.
pub struct CellSummary {
    pub magnitude: f64,
    pub mcc_mean: f64,
    pub mcc_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub roc_auc_mean: f64,
    pub roc_auc_std: f64,
}

fn summarize(magnitude: f64, metrics: &[RunMetrics]) -> CellSummary {
    let (mcc_mean, mcc_std) = mean_std(&metrics.iter().map(|m| m.mcc).collect::<Vec<_>>());
    let (accuracy_mean, accuracy_std) =
        mean_std(&metrics.iter().map(|m| m.accuracy).collect::<Vec<_>>());
    let (roc_auc_mean, roc_auc_std) =
        mean_std(&metrics.iter().map(|m| m.roc_auc).collect::<Vec<_>>());
    CellSummary {
        magnitude,
        mcc_mean,
        mcc_std,
        accuracy_mean,
        accuracy_std,
        roc_auc_mean,
        roc_auc_std,
    }
}

pub fn write_cells_csv(path: &Path, key_name: &str, cells: &[CellSummary]) -> Result<()> {
    let mut out = format!(
        "{key_name},mcc_mean,mcc_std,accuracy_mean,accuracy_std,roc_auc_mean,roc_auc_std\n"
    );
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.magnitude, c.mcc_mean, c.mcc_std, c.accuracy_mean, c.accuracy_std, c.roc_auc_mean,
            c.roc_auc_std
        );
    }
    write_atomic(path, out.as_bytes())
}

/// Execute a set of run specs in parallel, then collect their metrics in
/// spec order via the resume path.
pub fn run_specs(
    runs_root: &Path,
    dataset: &Dataset,
    data_label: &str,
    specs: Vec<RunSpec>,
    sub_contrastive: ContrastiveKind,
    threads: usize,
) -> Result<Vec<RunMetrics>> {
    let ordered: Vec<RunSpec> = specs.clone();
    parallel_for_each(specs, threads, |spec| {
        ensure_run_with_subs(runs_root, dataset, data_label, &spec, sub_contrastive).map(|_| ())
    })?;
    let mut collected = Vec::with_capacity(ordered.len());
    for spec in &ordered {
        collected.push(
            ensure_run_with_subs(runs_root, dataset, data_label, spec, sub_contrastive)?.metrics,
        );
    }
    Ok(collected)
}

/// Train the batch-size grid and aggregate per size.
#[allow(clippy::too_many_arguments)]
pub fn batch_sweep(
    runs_root: &Path,
    dataset: &Dataset,
    data_label: &str,
    model: ModelKind,
    seeds: &[u64],
    split_seed: u64,
    contrastive: ContrastiveKind,
    max_epochs: Option<usize>,
    threads: usize,
) -> Result<Vec<CellSummary>> {
    let mut specs = Vec::new();
    for &batch_size in &BATCH_GRID {
        for &seed in seeds {
            let mut config = base_config(model, seed, contrastive, max_epochs);
            config.batch_size = batch_size;
            specs.push(RunSpec {
                label: RunSpec::label_for(model, contrastive, seed, batch_size, 1.0),
                config,
                split_seed,
                fraction: 1.0,
                sub_checkpoints: None,
            });
        }
    }
    let metrics = run_specs(runs_root, dataset, data_label, specs, contrastive, threads)?;
    Ok(BATCH_GRID
        .iter()
        .enumerate()
        .map(|(i, &batch_size)| {
            let cell = &metrics[i * seeds.len()..(i + 1) * seeds.len()];
            summarize(batch_size as f64, cell)
        })
        .collect())
}

/// Train the training-fraction grid and aggregate per fraction.
#[allow(clippy::too_many_arguments)]
pub fn fraction_sweep(
    runs_root: &Path,
    dataset: &Dataset,
    data_label: &str,
    model: ModelKind,
    seeds: &[u64],
    split_seed: u64,
    contrastive: ContrastiveKind,
    max_epochs: Option<usize>,
    threads: usize,
) -> Result<Vec<CellSummary>> {
    let mut specs = Vec::new();
    for &fraction in &FRACTION_GRID {
        for &seed in seeds {
            let config = base_config(model, seed, contrastive, max_epochs);
            specs.push(RunSpec {
                label: RunSpec::label_for(model, contrastive, seed, config.batch_size, fraction),
                config,
                split_seed,
                fraction,
                sub_checkpoints: None,
            });
        }
    }
    let metrics = run_specs(runs_root, dataset, data_label, specs, contrastive, threads)?;
    Ok(FRACTION_GRID
        .iter()
        .enumerate()
        .map(|(i, &fraction)| {
            let cell = &metrics[i * seeds.len()..(i + 1) * seeds.len()];
            summarize(fraction, cell)
        })
        .collect())
}

/// Robustness rows for one model: per augmentation kind, MCC mean/std over
/// the per-seed trained checkpoints at each grid magnitude.
pub struct RobustnessTable {
    /// kind name -> (magnitude, mcc mean, mcc std) rows
    pub kinds: Vec<(&'static str, Vec<(f64, f64, f64)>)>,
}

#[allow(clippy::too_many_arguments)]
pub fn robustness_table(
    runs_root: &Path,
    dataset: &Dataset,
    data_label: &str,
    model: ModelKind,
    seeds: &[u64],
    split_seed: u64,
    contrastive: ContrastiveKind,
    max_epochs: Option<usize>,
    threads: usize,
) -> Result<RobustnessTable> {
    let specs: Vec<RunSpec> = seeds
        .iter()
        .map(|&seed| {
            let config = base_config(model, seed, contrastive, max_epochs);
            RunSpec {
                label: RunSpec::label_for(model, contrastive, seed, config.batch_size, 1.0),
                config,
                split_seed,
                fraction: 1.0,
                sub_checkpoints: None,
            }
        })
        .collect();
    parallel_for_each(specs.clone(), threads, |spec| {
        ensure_run_with_subs(runs_root, dataset, data_label, &spec, contrastive).map(|_| ())
    })?;

    let (_, _, test_split) = stratified_split(dataset, TRAIN_FRAC, VAL_FRAC, split_seed)?;
    // per seed: kind -> Vec<(magnitude, mcc)>
    let mut per_seed: Vec<Vec<(&'static str, Vec<(f64, f64)>)>> = Vec::new();
    for spec in &specs {
        let artifacts = ensure_run_with_subs(runs_root, dataset, data_label, spec, contrastive)?;
        let checkpoint = load_checkpoint(&artifacts.checkpoint_path)?;
        let mut rows = Vec::new();
        for (name, grid) in default_robustness_grids(split_seed) {
            let points: Vec<_> = grid.iter().map(|p| *p).collect();
            let result =
                robustness_sweep(&checkpoint.bundle, &checkpoint.norm_stats, &test_split, &points)?;
            rows.push((name, result));
        }
        per_seed.push(rows);
    }

    let mut kinds = Vec::new();
    for (kind_idx, (name, grid)) in default_robustness_grids(split_seed).iter().enumerate() {
        let mut rows = Vec::new();
        for (point_idx, point) in grid.iter().enumerate() {
            let mccs: Vec<f64> = per_seed
                .iter()
                .map(|rows| rows[kind_idx].1[point_idx].1)
                .collect();
            let (mean, std) = mean_std(&mccs);
            rows.push((point.magnitude, mean, std));
        }
        kinds.push((*name, rows));
    }
    Ok(RobustnessTable { kinds })
}

pub fn write_robustness_csv(
    path: &Path,
    key_name: &str,
    rows: &[(f64, f64, f64)],
) -> Result<()> {
    let mut out = format!("{key_name},mcc_mean,mcc_std\n");
    for (magnitude, mean, std) in rows {
        let _ = writeln!(out, "{magnitude},{mean},{std}");
    }
    write_atomic(path, out.as_bytes())
}

pub fn run(args: SweepArgs) -> Result<()> {
    let model: ModelKind = args.model.parse()?;
    let seeds = super::parse_seeds(&args.seeds)?;
    let contrastive = match &args.contrastive {
        Some(text) => text.parse()?,
        None => ContrastiveKind::None,
    };
    let threads = args.threads.unwrap_or_else(default_threads);
    let dataset = parse_csv(&args.data)?;
    let data_label = args.data.display().to_string();
    let runs_root = args.out_dir.join("runs");
    std::fs::create_dir_all(&runs_root)
        .map_err(|e| Error::io(runs_root.display().to_string(), e))?;

    match args.kind.as_str() {
        "batch" => {
            let cells = batch_sweep(
                &runs_root, &dataset, &data_label, model, &seeds, args.split_seed, contrastive,
                args.max_epochs, threads,
            )?;
            let path = args.out_dir.join(format!("sweep_batch_{model}.csv"));
            write_cells_csv(&path, "batch_size", &cells)?;
            println!("wrote {}", path.display());
        }
        "fraction" => {
            let cells = fraction_sweep(
                &runs_root, &dataset, &data_label, model, &seeds, args.split_seed, contrastive,
                args.max_epochs, threads,
            )?;
            let path = args.out_dir.join(format!("sweep_fraction_{model}.csv"));
            write_cells_csv(&path, "fraction", &cells)?;
            println!("wrote {}", path.display());
        }
        "robustness" => {
            let table = robustness_table(
                &runs_root, &dataset, &data_label, model, &seeds, args.split_seed, contrastive,
                args.max_epochs, threads,
            )?;
            for (name, rows) in &table.kinds {
                let path = args
                    .out_dir
                    .join(format!("sweep_robustness_{model}_{name}.csv"));
                write_robustness_csv(&path, magnitude_key(name), rows)?;
                println!("wrote {}", path.display());
            }
        }
        other => {
            return Err(Error::invalid(format!(
                "unknown sweep kind `{other}` (expected batch, fraction, or robustness)"
            )))
        }
    }
    Ok(())
}

pub fn magnitude_key(kind: &str) -> &'static str {
    match kind {
        "noise" => "sigma",
        "dropout" => "rate",
        "shift" => "delta_celsius",
        _ => "k",
    }
}
