//! Self-contrastive breast-screening models for microwave radiometry (MWR)
//! exams, built on a purpose-built reverse-mode autodiff micro-engine.
//!
//! An MWR exam pairs an infrared skin reading with a microwave internal
//! reading at 22 anatomical sites (44 temperatures per patient). The crate
//! provides:
//!
//! * [`tensor`] — dense f64 tensors (rank <= 2) with a recording tape,
//!   reverse-mode gradients, and a finite-difference checker;
//! * [`data`] — the exam data model, CSV I/O, a synthetic exam generator,
//!   stratified splitting, normalization, per-model input layouts, and the
//!   robustness augmentations;
//! * [`models`] — the five architectures (base classifier plus the local /
//!   regional / global self-contrastive tiers and the joint meta-model),
//!   with checkpoint persistence;
//! * [`optim`] — class-balanced BCE, four batch-wise metric-learning
//!   losses, Adam, plateau LR scheduling, and the training loop;
//! * [`eval`] — MCC / accuracy / ROC-AUC, multi-seed aggregation,
//!   robustness sweeps, embedding distance statistics, and the ensemble
//!   baselines.
//!
//! Determinism is a design contract: every random choice flows from a
//! seeded [`rng::Rng`] stream, and identical seeds reproduce identical
//! results bit for bit.

pub mod data;
pub mod error;
pub mod eval;
pub mod models;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
