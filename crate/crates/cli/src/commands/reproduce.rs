//! `mwr reproduce-all` — the full experimental protocol at desk scale.
//!
//! Generates the default synthetic dataset, trains all five models over
//! the seed list with no batch-wise loss (results table) and with each of
//! the four batch-wise losses (contrastive table), runs the batch-size,
//! training-fraction, and robustness sweeps, fits the ensemble baselines,
//! and emits plot-ready CSVs plus a markdown summary. Every training unit
//! is a resumable run directory: a second invocation retrains nothing.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::Args;

use mwr_core::data::{generate_synthetic, parse_csv, write_csv, Dataset, GeneratorConfig};
use mwr_core::error::{Error, Result};
use mwr_core::eval::{aggregate_runs, Aggregate, SeedMetrics};
use mwr_core::models::{write_atomic, ModelKind};
use mwr_core::optim::ContrastiveKind;

use crate::commands::ensemble::{ensemble_table, write_ensemble_csv};
use crate::commands::sweep::{
    batch_sweep, fraction_sweep, magnitude_key, robustness_table, write_cells_csv,
};
use crate::parallel::{default_threads, parallel_for_each};
use crate::runs::{ensure_run_with_subs, write_json_atomic, RunMetrics, RunSpec};

#[derive(Args)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Synthetic dataset size (the clinical-scale 4932 is available too).
    #[arg(long, default_value_t = 2000)]
    pub n_cases: usize,
    #[arg(long, default_value = "1,2,3")]
    pub seeds: String,
    /// Models included in the batch-size and fraction sweeps
    /// (comma-separated; the robustness sweep always covers all five).
    #[arg(long, default_value = "rmwr")]
    pub sweep_models: String,
    /// Cap on training epochs for every run (quick modes).
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub gen_seed: u64,
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
}

const SUB_MODELS: [ModelKind; 4] =
    [ModelKind::Base, ModelKind::Lmwr, ModelKind::Rmwr, ModelKind::Gmwr];

fn all_losses() -> Vec<ContrastiveKind> {
    let mut losses = vec![ContrastiveKind::None];
    losses.extend(ContrastiveKind::ALL_ACTIVE);
    losses
}

struct Plan {
    out_dir: PathBuf,
    runs_root: PathBuf,
    data_label: String,
    seeds: Vec<u64>,
    split_seed: u64,
    max_epochs: Option<usize>,
}

impl Plan {
    fn spec(&self, model: ModelKind, loss: ContrastiveKind, seed: u64) -> RunSpec {
        let mut config = mwr_core::optim::TrainConfig::for_kind(model);
        config.seed = seed;
        config.contrastive = if model == ModelKind::Jmwr { ContrastiveKind::None } else { loss };
        if let Some(cap) = self.max_epochs {
            config.max_epochs = cap;
        }
        RunSpec {
            label: RunSpec::label_for(model, loss, seed, config.batch_size, 1.0),
            config,
            split_seed: self.split_seed,
            fraction: 1.0,
            sub_checkpoints: None,
        }
    }

    fn metrics_for(
        &self,
        dataset: &Dataset,
        model: ModelKind,
        loss: ContrastiveKind,
    ) -> Result<Vec<RunMetrics>> {
        self.seeds
            .iter()
            .map(|&seed| {
                ensure_run_with_subs(
                    &self.runs_root,
                    dataset,
                    &self.data_label,
                    &self.spec(model, loss, seed),
                    loss,
                )
                .map(|a| a.metrics)
            })
            .collect()
    }
}

pub fn run(args: ReproduceArgs) -> Result<()> {
    let seeds = super::parse_seeds(&args.seeds)?;
    let sweep_models: Vec<ModelKind> = args
        .sweep_models
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_>>()?;
    let threads = args.threads.unwrap_or_else(default_threads);
    std::fs::create_dir_all(&args.out_dir)
        .map_err(|e| Error::io(args.out_dir.display().to_string(), e))?;

    // 1. Synthetic dataset (resumable: reuse an existing file).
    let data_path = args.out_dir.join("data.csv");
    if !data_path.exists() {
        let config = GeneratorConfig {
            n_cases: args.n_cases,
            seed: args.gen_seed,
            ..GeneratorConfig::default()
        };
        write_csv(&generate_synthetic(&config)?, &data_path)?;
        write_json_atomic(&data_path.with_extension("config.json"), &config)?;
        println!("generated {} cases -> {}", args.n_cases, data_path.display());
    }
    let dataset = parse_csv(&data_path)?;

    let plan = Plan {
        runs_root: args.out_dir.join("runs"),
        // Directory-independent label: two invocations with different
        // output directories must produce identical run configs.
        data_label: "data.csv".to_string(),
        seeds,
        split_seed: args.split_seed,
        max_epochs: args.max_epochs,
        out_dir: args.out_dir.clone(),
    };

    // 2. Sub-model runs for every loss, then the joint fine-tunes.
    let mut phase_a = Vec::new();
    for loss in all_losses() {
        for model in SUB_MODELS {
            for &seed in &plan.seeds {
                phase_a.push((plan.spec(model, loss, seed), loss));
            }
        }
    }
    println!("phase 1/4: {} sub-model runs ({} threads)", phase_a.len(), threads);
    parallel_for_each(phase_a, threads, |(spec, loss)| {
        ensure_run_with_subs(&plan.runs_root, &dataset, &plan.data_label, &spec, loss).map(|_| ())
    })?;

    let mut phase_b = Vec::new();
    for loss in all_losses() {
        for &seed in &plan.seeds {
            phase_b.push((plan.spec(ModelKind::Jmwr, loss, seed), loss));
        }
    }
    println!("phase 2/4: {} joint fine-tunes", phase_b.len());
    parallel_for_each(phase_b, threads, |(spec, loss)| {
        ensure_run_with_subs(&plan.runs_root, &dataset, &plan.data_label, &spec, loss).map(|_| ())
    })?;

    // 3. Result tables.
    let mut table1 = Vec::new();
    for model in ModelKind::ALL {
        let metrics = plan.metrics_for(&dataset, model, ContrastiveKind::None)?;
        let first = &metrics[0];
        let per_seed: Vec<SeedMetrics> = metrics
            .iter()
            .map(|m| SeedMetrics { seed: m.seed, mcc: m.mcc, accuracy: m.accuracy, roc_auc: m.roc_auc })
            .collect();
        table1.push(aggregate_runs(model, &first.config_hash, &per_seed)?);
    }
    let mut out = String::from("model,mcc,accuracy,roc_auc\n");
    for report in &table1 {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            report.model,
            report.mcc.formatted(),
            report.accuracy.formatted(),
            report.roc_auc.formatted()
        );
    }
    write_atomic(&plan.out_dir.join("table1.csv"), out.as_bytes())?;

    let mut table2_cells: Vec<(ModelKind, Vec<Aggregate>)> = Vec::new();
    for model in ModelKind::ALL {
        let mut row = Vec::new();
        for loss in ContrastiveKind::ALL_ACTIVE {
            let metrics = plan.metrics_for(&dataset, model, loss)?;
            row.push(Aggregate::of(&metrics.iter().map(|m| m.mcc).collect::<Vec<_>>()));
        }
        table2_cells.push((model, row));
    }
    let mut out = String::from("model,contrastive,npairs,triplet_hard,triplet_semihard\n");
    for (model, cells) in &table2_cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            model,
            cells[0].formatted(),
            cells[1].formatted(),
            cells[2].formatted(),
            cells[3].formatted()
        );
    }
    write_atomic(&plan.out_dir.join("table2.csv"), out.as_bytes())?;
    println!("phase 3/4: tables written");

    // 4. Sweeps: fractions and batch sizes for the selected models,
    // robustness for all five.
    for &model in &sweep_models {
        let cells = fraction_sweep(
            &plan.runs_root, &dataset, &plan.data_label, model, &plan.seeds, plan.split_seed,
            ContrastiveKind::None, plan.max_epochs, threads,
        )?;
        write_cells_csv(&plan.out_dir.join(format!("fig5a_{model}.csv")), "fraction", &cells)?;

        let cells = batch_sweep(
            &plan.runs_root, &dataset, &plan.data_label, model, &plan.seeds, plan.split_seed,
            ContrastiveKind::None, plan.max_epochs, threads,
        )?;
        write_cells_csv(&plan.out_dir.join(format!("fig5b_{model}.csv")), "batch_size", &cells)?;
    }

    let mut per_model_robustness = Vec::new();
    for model in ModelKind::ALL {
        let table = robustness_table(
            &plan.runs_root, &dataset, &plan.data_label, model, &plan.seeds, plan.split_seed,
            ContrastiveKind::None, plan.max_epochs, threads,
        )?;
        per_model_robustness.push((model, table));
    }
    let kind_names: Vec<&'static str> =
        per_model_robustness[0].1.kinds.iter().map(|(n, _)| *n).collect();
    for (kind_idx, kind_name) in kind_names.iter().enumerate() {
        let mut out = String::from(magnitude_key(kind_name));
        for model in ModelKind::ALL {
            let _ = write!(out, ",{model}_mean,{model}_std");
        }
        out.push('\n');
        let rows = per_model_robustness[0].1.kinds[kind_idx].1.len();
        for row in 0..rows {
            let magnitude = per_model_robustness[0].1.kinds[kind_idx].1[row].0;
            let _ = write!(out, "{magnitude}");
            for (_, table) in &per_model_robustness {
                let (_, mean, std) = table.kinds[kind_idx].1[row];
                let _ = write!(out, ",{mean},{std}");
            }
            out.push('\n');
        }
        write_atomic(&plan.out_dir.join(format!("fig6_{kind_name}.csv")), out.as_bytes())?;
    }

    // 5. Ensembles over the no-loss sub-model checkpoints.
    let mut triples = Vec::new();
    for &seed in &plan.seeds {
        let triple: Vec<PathBuf> = [ModelKind::Lmwr, ModelKind::Rmwr, ModelKind::Gmwr]
            .into_iter()
            .map(|kind| {
                plan.runs_root
                    .join(RunSpec::label_for(kind, ContrastiveKind::None, seed, 4, 1.0))
                    .join("checkpoint.json")
            })
            .collect();
        triples.push([triple[0].clone(), triple[1].clone(), triple[2].clone()]);
    }
    let ensemble_rows = ensemble_table(
        &plan.runs_root, &dataset, &plan.data_label, &triples, plan.split_seed, plan.max_epochs,
    )?;
    write_ensemble_csv(&plan.out_dir.join("fig7.csv"), &ensemble_rows)?;
    println!("phase 4/4: sweeps and ensembles written");

    // 6. Markdown summary.
    write_summary(&plan.out_dir, &table1, &table2_cells, &ensemble_rows)?;
    println!("summary: {}", plan.out_dir.join("summary.md").display());
    Ok(())
}

fn write_summary(
    out_dir: &Path,
    table1: &[mwr_core::eval::MetricsReport],
    table2: &[(ModelKind, Vec<Aggregate>)],
    ensemble: &[crate::commands::ensemble::EnsembleRow],
) -> Result<()> {
    let mut md = String::new();
    md.push_str("# Synthetic-protocol results\n\n");
    md.push_str("Numbers are test-set mean ± population std over the run seeds on the\n");
    md.push_str("synthetic dataset; they characterize this pipeline, not any clinical data.\n\n");
    md.push_str("## Model comparison\n\n");
    md.push_str("| model | MCC | accuracy | ROC AUC |\n|---|---|---|---|\n");
    for report in table1 {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} |",
            report.model,
            report.mcc.formatted(),
            report.accuracy.formatted(),
            report.roc_auc.formatted()
        );
    }
    md.push_str("\n## Batch-wise loss comparison (MCC)\n\n");
    md.push_str("| model | contrastive | n-pairs | triplet hard | triplet semi-hard |\n");
    md.push_str("|---|---|---|---|---|\n");
    for (model, cells) in table2 {
        let _ = writeln!(
            md,
            "| {} | {} | {} | {} | {} |",
            model,
            cells[0].formatted(),
            cells[1].formatted(),
            cells[2].formatted(),
            cells[3].formatted()
        );
    }
    md.push_str("\n## Ensemble strategies (MCC)\n\n| method | mean | std |\n|---|---|---|\n");
    for row in ensemble {
        let _ = writeln!(md, "| {} | {:.3} | {:.3} |", row.method, row.mcc_mean, row.mcc_std);
    }
    md.push_str("\nSweep grids: `fig5a_*.csv` (training fraction), `fig5b_*.csv` (batch size),\n");
    md.push_str("`fig6_*.csv` (robustness), `fig7.csv` (ensembles).\n");
    write_atomic(&out_dir.join("summary.md"), md.as_bytes())
}
