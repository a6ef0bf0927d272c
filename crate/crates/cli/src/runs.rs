//! Run directories: one directory per training unit, written atomically
//! and resumable by key.
//!
//! A run directory holds `config.json` (the fully merged, re-executable
//! configuration), `checkpoint.json`, `history.csv`, and `metrics.json`.
//! A directory whose `metrics.json` exists is considered complete and is
//! never retrained.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mwr_core::data::{stratified_split, subsample_fraction, Dataset};
use mwr_core::error::{Error, Result};
use mwr_core::eval::evaluate_scores;
use mwr_core::models::{
    load_checkpoint, save_checkpoint, write_atomic, Checkpoint, ModelBundle, ModelKind,
};
use mwr_core::optim::{train, TrainConfig};
use mwr_core::rng::{derive_seed, Rng};

pub const TRAIN_FRAC: f64 = 0.6;
pub const VAL_FRAC: f64 = 0.2;

/// FNV-1a hash of the canonical config JSON, as fixed-width hex.
pub fn config_hash(config: &serde_json::Value) -> String {
    let text = config.to_string();
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for b in text.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    format!("{h:016x}")
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| Error::numeric(format!("json serialization failed: {e}")))?;
    write_atomic(path, json.as_bytes())
}

/// The per-run summary emitted as `metrics.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMetrics {
    pub model: String,
    pub seed: u64,
    pub mcc: f64,
    pub accuracy: f64,
    pub roc_auc: f64,
    pub config_hash: String,
}

/// One training unit.
#[derive(Debug, Clone, Serialize)]
pub struct RunSpec {
    /// Canonical directory key, e.g. `rmwr-none-s1-b4-f100`.
    pub label: String,
    pub config: TrainConfig,
    /// Stratified-split seed (shared across run seeds so every run sees
    /// the same train/val/test partition).
    pub split_seed: u64,
    /// Fraction of the training split to keep (1.0 = all).
    pub fraction: f64,
    /// Pre-trained sub-model checkpoints, required for the joint model.
    pub sub_checkpoints: Option<[PathBuf; 3]>,
}

impl RunSpec {
    pub fn label_for(
        model: ModelKind,
        contrastive: mwr_core::optim::ContrastiveKind,
        seed: u64,
        batch_size: usize,
        fraction: f64,
    ) -> String {
        format!(
            "{model}-{contrastive}-s{seed}-b{batch_size}-f{:03}",
            (fraction * 100.0).round() as u32
        )
    }
}

pub struct RunArtifacts {
    pub dir: PathBuf,
    pub checkpoint_path: PathBuf,
    pub metrics: RunMetrics,
}

fn effective_config_json(spec: &RunSpec, data_label: &str) -> serde_json::Value {
    serde_json::json!({
        "command": "train",
        "data": data_label,
        "split_seed": spec.split_seed,
        "fraction": spec.fraction,
        "train": spec.config,
    })
}

/// Build the model for a spec: fresh Glorot init, or a joint bundle over
/// the given pre-trained checkpoints.
pub fn build_bundle(spec: &RunSpec) -> Result<ModelBundle> {
    let mut rng = Rng::new(derive_seed(spec.config.seed, "init", 0));
    match spec.config.model {
        ModelKind::Jmwr => {
            let paths = spec.sub_checkpoints.as_ref().ok_or_else(|| {
                Error::config(
                    "the joint model needs --sub-checkpoints <LMWR> <RMWR> <GMWR>".to_string(),
                )
            })?;
            let l = load_checkpoint(&paths[0])?;
            let r = load_checkpoint(&paths[1])?;
            let g = load_checkpoint(&paths[2])?;
            ModelBundle::new_joint(&l.bundle, &r.bundle, &g.bundle, &mut rng)
        }
        kind => ModelBundle::new(kind, &mut rng),
    }
}

/// Train (or resume) one unit under `runs_root/<label>/`.
pub fn ensure_run(
    runs_root: &Path,
    dataset: &Dataset,
    data_label: &str,
    spec: &RunSpec,
) -> Result<RunArtifacts> {
    let dir = runs_root.join(&spec.label);
    let metrics_path = dir.join("metrics.json");
    let checkpoint_path = dir.join("checkpoint.json");
    if metrics_path.exists() {
        let text = std::fs::read_to_string(&metrics_path)
            .map_err(|e| Error::io(metrics_path.display().to_string(), e))?;
        let metrics: RunMetrics = serde_json::from_str(&text)
            .map_err(|e| Error::parse(metrics_path.display().to_string(), e.to_string()))?;
        return Ok(RunArtifacts { dir, checkpoint_path, metrics });
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let config_json = effective_config_json(spec, data_label);
    let hash = config_hash(&config_json);
    write_json_atomic(&dir.join("config.json"), &config_json)?;

    let (train_full, val_split, test_split) =
        stratified_split(dataset, TRAIN_FRAC, VAL_FRAC, spec.split_seed)?;
    let train_split = if spec.fraction < 1.0 {
        subsample_fraction(&train_full, spec.fraction, derive_seed(spec.split_seed, "fraction", 0))?
    } else {
        train_full
    };

    let mut bundle = build_bundle(spec)?;
    let outcome = train(&mut bundle, &train_split, &val_split, &spec.config)?;
    write_atomic(&dir.join("history.csv"), outcome.history.to_csv_string().as_bytes())?;
    if let Some(reason) = outcome.aborted {
        return Err(Error::numeric(format!("run {}: {reason}", spec.label)));
    }

    save_checkpoint(
        &Checkpoint {
            bundle,
            norm_stats: outcome.norm_stats.clone(),
            seed: spec.config.seed,
            config: config_json,
        },
        &checkpoint_path,
    )?;

    // Test metrics from the best-validation parameters.
    let checkpoint = load_checkpoint(&checkpoint_path)?;
    let features: Vec<_> = test_split
        .exams
        .iter()
        .map(|e| mwr_core::data::apply_normalization(e, &checkpoint.norm_stats))
        .collect();
    let labels: Vec<f64> = test_split.exams.iter().map(|e| e.label.as_f64()).collect();
    let scores = checkpoint.bundle.scores(&features)?;
    let seed_metrics = evaluate_scores(&scores, &labels, spec.config.seed)?;
    let metrics = RunMetrics {
        model: spec.config.model.to_string(),
        seed: spec.config.seed,
        mcc: seed_metrics.mcc,
        accuracy: seed_metrics.accuracy,
        roc_auc: seed_metrics.roc_auc,
        config_hash: hash,
    };
    write_json_atomic(&metrics_path, &metrics)?;
    Ok(RunArtifacts { dir, checkpoint_path, metrics })
}

/// As [`ensure_run`], but a joint-model spec without explicit sub-model
/// checkpoints first ensures its three sub-model runs (same seed, batch
/// size, epochs, and fraction; batch-wise loss `sub_contrastive`) and
/// fine-tunes from them.
pub fn ensure_run_with_subs(
    runs_root: &Path,
    dataset: &Dataset,
    data_label: &str,
    spec: &RunSpec,
    sub_contrastive: mwr_core::optim::ContrastiveKind,
) -> Result<RunArtifacts> {
    if spec.config.model != ModelKind::Jmwr || spec.sub_checkpoints.is_some() {
        return ensure_run(runs_root, dataset, data_label, spec);
    }
    let mut paths = Vec::with_capacity(3);
    for kind in [ModelKind::Lmwr, ModelKind::Rmwr, ModelKind::Gmwr] {
        let mut config = TrainConfig::for_kind(kind);
        config.seed = spec.config.seed;
        config.batch_size = spec.config.batch_size;
        config.max_epochs = spec.config.max_epochs;
        config.early_stop_patience = spec.config.early_stop_patience;
        config.contrastive = sub_contrastive;
        let sub_spec = RunSpec {
            label: RunSpec::label_for(
                kind,
                sub_contrastive,
                config.seed,
                config.batch_size,
                spec.fraction,
            ),
            config,
            split_seed: spec.split_seed,
            fraction: spec.fraction,
            sub_checkpoints: None,
        };
        paths.push(ensure_run(runs_root, dataset, data_label, &sub_spec)?.checkpoint_path);
    }
    let mut full = spec.clone();
    full.sub_checkpoints = Some([paths[0].clone(), paths[1].clone(), paths[2].clone()]);
    ensure_run(runs_root, dataset, data_label, &full)
}

/// Map an error to the documented exit code: 2 configuration, 3 data,
/// 4 numeric failure.
pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::InvalidArgument(_) | Error::Config(_) | Error::Shape(_) => 2,
        Error::Parse { .. } | Error::Io { .. } => 3,
        Error::Numeric(_) => 4,
    }
}
