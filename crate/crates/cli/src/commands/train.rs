//! `mwr train`

use std::path::PathBuf;

use clap::Args;

use mwr_core::data::parse_csv;
use mwr_core::error::{Error, Result};
use mwr_core::models::ModelKind;
use mwr_core::optim::{ContrastiveKind, TrainConfig};

use crate::runs::{ensure_run, RunSpec};

#[derive(Args)]
pub struct TrainArgs {
    /// Model kind: base, lmwr, rmwr, gmwr, or jmwr.
    #[arg(long)]
    pub model: String,
    /// Dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory (created; reused if metrics.json already exists).
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Training config JSON; flags below override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initialization / shuffle seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stratified-split seed (fixed across run seeds by default).
    #[arg(long, default_value_t = 1)]
    pub split_seed: u64,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate for the joint model's fresh head layers.
    #[arg(long)]
    pub head_lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub early_stop_patience: Option<usize>,
    /// Batch-wise loss: none, contrastive, npairs, triplet-hard,
    /// triplet-semihard.
    #[arg(long)]
    pub contrastive: Option<String>,
    #[arg(long)]
    pub contrastive_weight: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    /// Fraction of the training split to use.
    #[arg(long, default_value_t = 1.0)]
    pub fraction: f64,
    /// Pre-trained sub-model checkpoints (lmwr rmwr gmwr), jmwr only.
    #[arg(long, num_args = 3)]
    pub sub_checkpoints: Option<Vec<PathBuf>>,
}

pub fn effective_config(args: &TrainArgs) -> Result<TrainConfig> {
    let model: ModelKind = args.model.parse()?;
    // Precedence: flags over config file over per-kind defaults.
    let mut config: TrainConfig = match &args.config {
        Some(path) => super::load_config_file(path)?,
        None => TrainConfig::for_kind(model),
    };
    config.model = model;
    if let Some(v) = args.seed {
        config.seed = v;
    }
    if let Some(v) = args.lr {
        config.lr = v;
    }
    if let Some(v) = args.head_lr {
        config.head_lr = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = args.max_epochs {
        config.max_epochs = v;
    }
    if let Some(v) = args.early_stop_patience {
        config.early_stop_patience = v;
    }
    if let Some(kind) = &args.contrastive {
        config.contrastive = kind.parse::<ContrastiveKind>()?;
    }
    if let Some(v) = args.contrastive_weight {
        config.contrastive_weight = v;
    }
    if let Some(v) = args.margin {
        config.contrastive_margin = v;
    }
    Ok(config)
}

pub fn run(args: TrainArgs) -> Result<()> {
    let config = effective_config(&args)?;
    if config.model == ModelKind::Jmwr && args.sub_checkpoints.is_none() {
        return Err(Error::config(
            "training jmwr requires --sub-checkpoints <LMWR> <RMWR> <GMWR>",
        ));
    }
    let sub_checkpoints = args
        .sub_checkpoints
        .as_ref()
        .map(|paths| [paths[0].clone(), paths[1].clone(), paths[2].clone()]);
    let dataset = parse_csv(&args.data)?;
    let spec = RunSpec {
        label: String::new(), // the out-dir itself is the run directory
        config,
        split_seed: args.split_seed,
        fraction: args.fraction,
        sub_checkpoints,
    };
    let artifacts = ensure_run(
        &args.out_dir,
        &dataset,
        &args.data.display().to_string(),
        &spec,
    )?;
    println!(
        "{}: seed {} -> mcc {:.4}, accuracy {:.4}, roc_auc {:.4} ({})",
        artifacts.metrics.model,
        artifacts.metrics.seed,
        artifacts.metrics.mcc,
        artifacts.metrics.accuracy,
        artifacts.metrics.roc_auc,
        artifacts.dir.display()
    );
    Ok(())
}
