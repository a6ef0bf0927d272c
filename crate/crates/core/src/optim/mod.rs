//! Training: configuration, the epoch loop, and run history.
//!
//! One epoch shuffles the training split with a seed derived from
//! `(run seed, epoch)`, walks it in batches, and for each batch records a
//! forward pass, the class-balanced BCE (plus an optional batch-wise
//! metric-learning term on the embedding hook, weighted 0.1 by default),
//! runs backward, and takes one Adam step. Validation loss drives the
//! plateau schedule, the best-parameters snapshot, and early stopping.

mod adam;
mod losses;
mod scheduler;

pub use adam::AdamState;
pub use losses::{
    class_balanced_bce, class_balanced_bce_value, contrastive_pair_loss, npairs_loss,
    triplet_hard_loss, triplet_semihard_loss, ClassWeights, PRED_CLAMP_HI, PRED_CLAMP_LO,
};
pub use scheduler::PlateauScheduler;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{apply_normalization, fit_normalization, Dataset, NormStats, FEATURES};
use crate::error::{Error, Result};
use crate::models::{build_inputs, ModelBundle, ModelKind};
use crate::rng::{derive_seed, Rng};
use crate::tensor::{Tape, Tensor, Var};

/// Batch-wise metric-learning loss attached to the embedding hook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[serde(rename_all = "snake_case")]
pub enum ContrastiveKind {
    None,
    Contrastive,
    Npairs,
    TripletHard,
    TripletSemihard,
}

impl ContrastiveKind {
    pub const ALL_ACTIVE: [ContrastiveKind; 4] = [
        ContrastiveKind::Contrastive,
        ContrastiveKind::Npairs,
        ContrastiveKind::TripletHard,
        ContrastiveKind::TripletSemihard,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ContrastiveKind::None => "none",
            ContrastiveKind::Contrastive => "contrastive",
            ContrastiveKind::Npairs => "npairs",
            ContrastiveKind::TripletHard => "triplet_hard",
            ContrastiveKind::TripletSemihard => "triplet_semihard",
        }
    }
}

impl std::str::FromStr for ContrastiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "none" => Ok(ContrastiveKind::None),
            "contrastive" => Ok(ContrastiveKind::Contrastive),
            "npairs" | "n_pairs" => Ok(ContrastiveKind::Npairs),
            "triplet_hard" => Ok(ContrastiveKind::TripletHard),
            "triplet_semihard" | "triplet_semi_hard" => Ok(ContrastiveKind::TripletSemihard),
            other => Err(Error::invalid(format!("unknown contrastive loss `{other}`"))),
        }
    }
}

impl std::fmt::Display for ContrastiveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// All optimizer / scheduler / loss / seed / batch settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelKind,
    /// Base learning rate: 1e-4, or 1e-7 when fine-tuning the joint model.
    pub lr: f64,
    /// Learning rate of the joint model's combiner layers; defaults to
    /// `lr` (the whole joint model fine-tunes at one rate) and is exposed
    /// for experimentation.
    pub head_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without validation improvement.
    pub early_stop_patience: usize,
    pub plateau_factor: f64,
    pub plateau_patience: u32,
    pub min_lr: f64,
    pub seed: u64,
    pub contrastive: ContrastiveKind,
    pub contrastive_weight: f64,
    pub contrastive_margin: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Base,
            lr: 1e-4,
            head_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 4,
            max_epochs: 150,
            early_stop_patience: 15,
            plateau_factor: 0.1,
            plateau_patience: 5,
            min_lr: 1e-12,
            seed: 1,
            contrastive: ContrastiveKind::None,
            contrastive_weight: 0.1,
            contrastive_margin: 1.0,
        }
    }
}

impl TrainConfig {
    /// Paper defaults for a model kind: lr 1e-4 everywhere, reduced to
    /// 1e-7 for the joint fine-tune (all parameters, combiner included).
    pub fn for_kind(kind: ModelKind) -> Self {
        let lr = if kind == ModelKind::Jmwr { 1e-7 } else { 1e-4 };
        TrainConfig { model: kind, lr, head_lr: lr, ..TrainConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("train: batch_size must be >= 1"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("train: max_epochs must be >= 1"));
        }
        if self.contrastive_weight < 0.0 {
            return Err(Error::invalid("train: contrastive_weight must be >= 0"));
        }
        if self.lr < 0.0 || self.head_lr < 0.0 {
            return Err(Error::invalid("train: learning rates must be >= 0"));
        }
        Ok(())
    }
}

/// One row per completed epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
    /// Wall time of the epoch; excluded from determinism comparisons.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRow>,
}

impl TrainHistory {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,lr,seconds\n");
        for row in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                row.epoch, row.train_loss, row.val_loss, row.lr, row.seconds
            ));
        }
        out
    }
}

/// Result of a training run. `aborted` carries the description of a
/// numeric failure (NaN loss / gradients); the history up to that point is
/// preserved either way.
pub struct TrainOutcome {
    pub history: TrainHistory,
    pub norm_stats: NormStats,
    pub best_val_loss: f64,
    pub best_epoch: usize,
    pub aborted: Option<String>,
}

/// Train a model in place; on return the bundle holds the parameters of
/// the best validation epoch.
pub fn train(
    bundle: &mut ModelBundle,
    train_split: &Dataset,
    val_split: &Dataset,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if config.model != bundle.kind {
        return Err(Error::config(format!(
            "train: config is for {} but the bundle is {}",
            config.model, bundle.kind
        )));
    }
    if train_split.is_empty() || val_split.is_empty() {
        return Err(Error::invalid("train: empty split"));
    }
    let (n_neg, n_pos) = train_split.class_counts();
    let weights = ClassWeights::from_counts(n_neg, n_pos)?;
    let norm_stats = fit_normalization(train_split)?;

    let featurize = |ds: &Dataset| -> (Vec<[f64; FEATURES]>, Vec<f64>) {
        let feats = ds.exams.iter().map(|e| apply_normalization(e, &norm_stats)).collect();
        let labels = ds.exams.iter().map(|e| e.label.as_f64()).collect();
        (feats, labels)
    };
    let (train_feats, train_labels) = featurize(train_split);
    let (val_feats, val_labels) = featurize(val_split);

    let mut adam =
        AdamState::new(&bundle.params, config.lr, config.beta1, config.beta2, config.epsilon);
    if let Some(boundary) = bundle.fine_tune_boundary() {
        // Freshly initialized joint layers learn at head_lr; the scale
        // rides on top of the scheduled base rate.
        let scale = if config.lr > 0.0 { config.head_lr / config.lr } else { 0.0 };
        for i in boundary..bundle.params.len() {
            adam.set_lr_scale(i, scale);
        }
    }
    let mut scheduler =
        PlateauScheduler::new(config.plateau_factor, config.plateau_patience, config.min_lr);

    let mut history = TrainHistory::default();
    let mut best_val_loss = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = bundle.params.tensors();
    let mut stall = 0usize;
    let mut aborted = None;

    // Parameters live as leaves on one reusable tape; each batch truncates
    // the recorded computation back to them instead of re-copying half a
    // million weights per step.
    let mut tape = Tape::new();
    let vars = bundle.bind(&mut tape);
    let base_len = tape.len();

    'epochs: for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..train_feats.len()).collect();
        let mut shuffle_rng = Rng::new(derive_seed(config.seed, "shuffle", epoch as u64));
        shuffle_rng.shuffle(&mut order);

        let mut epoch_loss_sum = 0.0;
        let mut batches = 0usize;
        for batch_idx in order.chunks(config.batch_size) {
            let feats: Vec<[f64; FEATURES]> = batch_idx.iter().map(|&i| train_feats[i]).collect();
            let labels: Vec<f64> = batch_idx.iter().map(|&i| train_labels[i]).collect();
            tape.truncate(base_len);
            match train_step(bundle, &mut tape, &vars, &mut adam, &feats, &labels, &weights, config)
            {
                Ok(loss) => {
                    epoch_loss_sum += loss;
                    batches += 1;
                }
                Err(Error::Numeric(msg)) => {
                    aborted = Some(format!("epoch {epoch}: {msg}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        let train_loss = epoch_loss_sum / batches as f64;

        // Sync the tape-resident parameters back for evaluation.
        for (i, v) in vars.iter().enumerate() {
            *bundle.params.value_mut(i) = tape.value(*v).clone();
        }

        let val_scores = bundle.scores(&val_feats)?;
        let val_loss = class_balanced_bce_value(&val_scores, &val_labels, &weights)?;
        if !val_loss.is_finite() {
            aborted = Some(format!("epoch {epoch}: non-finite validation loss {val_loss}"));
            break 'epochs;
        }
        adam.lr = scheduler.update(val_loss, adam.lr)?;

        history.epochs.push(EpochRow {
            epoch,
            train_loss,
            val_loss,
            lr: adam.lr,
            seconds: start.elapsed().as_secs_f64(),
        });

        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            best_epoch = epoch;
            best_params = bundle.params.tensors();
            stall = 0;
        } else {
            stall += 1;
            if stall >= config.early_stop_patience {
                break;
            }
        }
    }

    bundle.params.set_tensors(&best_params)?;
    Ok(TrainOutcome { history, norm_stats, best_val_loss, best_epoch, aborted })
}

/// One batch: forward, loss, backward, Adam. Returns the batch loss.
#[allow(clippy::too_many_arguments)]
fn train_step(
    bundle: &ModelBundle,
    tape: &mut Tape,
    vars: &[Var],
    adam: &mut AdamState,
    feats: &[[f64; FEATURES]],
    labels: &[f64],
    weights: &ClassWeights,
    config: &TrainConfig,
) -> Result<f64> {
    let inputs = build_inputs(bundle.kind, feats)?;
    let out = bundle.forward(tape, vars, &inputs)?;
    let bce = class_balanced_bce(tape, out.score, labels, weights)?;
    let loss = match batch_contrastive(
        tape,
        config.contrastive,
        out.embedding,
        labels,
        config.contrastive_margin,
    )? {
        Some(term) => {
            let scaled = tape.scale(term, config.contrastive_weight);
            tape.add(bce, scaled)?
        }
        None => bce,
    };
    let loss_value = tape.value(loss).item()?;
    if !loss_value.is_finite() {
        return Err(Error::numeric(format!("non-finite batch loss {loss_value}")));
    }
    tape.backward(loss)?;
    let grads: Vec<Tensor> = vars.iter().map(|v| tape.take_grad(*v)).collect();
    adam.step_on_tape(tape, vars, &grads)?;
    Ok(loss_value)
}

/// Batch-wise term on the embedding hook. Degenerate batches — fewer than
/// two samples or a single class — contribute nothing; with batch size 4
/// under a 8:1 class imbalance they are common, and skipping them beats
/// erroring out.
pub fn batch_contrastive(
    tape: &mut Tape,
    kind: ContrastiveKind,
    embeddings: Var,
    labels: &[f64],
    margin: f64,
) -> Result<Option<Var>> {
    if kind == ContrastiveKind::None {
        return Ok(None);
    }
    let has_pos = labels.iter().any(|&l| l >= 0.5);
    let has_neg = labels.iter().any(|&l| l < 0.5);
    if labels.len() < 2 || !has_pos || !has_neg {
        return Ok(None);
    }
    let term = match kind {
        ContrastiveKind::None => unreachable!(),
        ContrastiveKind::Contrastive => contrastive_pair_loss(tape, embeddings, labels, margin)?,
        ContrastiveKind::Npairs => npairs_loss(tape, embeddings, labels)?,
        ContrastiveKind::TripletHard => triplet_hard_loss(tape, embeddings, labels, margin)?,
        ContrastiveKind::TripletSemihard => {
            triplet_semihard_loss(tape, embeddings, labels, margin)?
        }
    };
    Ok(Some(term))
}
