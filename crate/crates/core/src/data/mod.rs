//! MWR exam data model, layouts, and normalization.
//!
//! One exam records 44 temperatures: for each breast, points 0-9 (0 = the
//! nipple, 1-8 equidistant around it, 9 = axillary) in two modes (infrared
//! skin and microwave internal), plus chest reference points T1 and T2 in
//! both modes.
//!
//! The canonical feature order, used by the CSV schema, the base-model
//! layout, and normalization statistics alike, is:
//!
//! ```text
//! [ 0..10)  left skin, points 0-9
//! [10..20)  left internal, points 0-9
//! [20..30)  right skin, points 0-9
//! [30..40)  right internal, points 0-9
//! [40..44)  t1_skin, t1_int, t2_skin, t2_int
//! ```

mod augment;
mod csv;
mod generate;
mod split;

pub use augment::{augment_exam, augmented_features, AugmentationKind, AugmentationSpec};
pub use csv::{parse_csv, parse_csv_reader, write_csv, write_csv_string, CSV_HEADER};
pub use generate::{generate_synthetic, generate_with_metadata, GeneratorConfig, Hotspot};
pub use split::{stratified_split, subsample_fraction};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Number of temperature readings per exam.
pub const FEATURES: usize = 44;
/// Measurement points per breast (nipple, ring 1-8, axillary).
pub const POINTS_PER_BREAST: usize = 10;
/// Ring points around the nipple.
pub const RING_POINTS: usize = 8;

/// Accepted raw temperature range on ingest, in degrees Celsius.
pub const TEMP_MIN: f64 = 20.0;
pub const TEMP_MAX: f64 = 45.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Healthy,
    Cancer,
}

impl Label {
    pub fn from_u8(v: u8) -> Result<Label> {
        match v {
            0 => Ok(Label::Healthy),
            1 => Ok(Label::Cancer),
            _ => Err(Error::invalid(format!("label must be 0 or 1, got {v}"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Healthy => 0,
            Label::Cancer => 1,
        }
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.as_u8())
    }
}

/// Index of a skin reading in the canonical 44-feature order.
pub fn skin_index(side: Side, point: usize) -> usize {
    debug_assert!(point < POINTS_PER_BREAST);
    match side {
        Side::Left => point,
        Side::Right => 20 + point,
    }
}

/// Index of an internal reading in the canonical 44-feature order.
pub fn internal_index(side: Side, point: usize) -> usize {
    debug_assert!(point < POINTS_PER_BREAST);
    match side {
        Side::Left => 10 + point,
        Side::Right => 30 + point,
    }
}

/// Indices of the reference readings: (t1_skin, t1_int, t2_skin, t2_int).
pub const REF_INDICES: [usize; 4] = [40, 41, 42, 43];

/// One patient's exam: id, label, and the 44 raw temperatures.
#[derive(Debug, Clone, PartialEq)]
pub struct MwrExam {
    pub id: String,
    pub label: Label,
    pub values: [f64; FEATURES],
}

impl MwrExam {
    /// Exchange all left- and right-breast readings and T1 <-> T2.
    /// An involution: applying it twice restores the exam.
    pub fn breast_swapped(&self) -> MwrExam {
        MwrExam {
            id: self.id.clone(),
            label: self.label,
            values: swap_features(&self.values),
        }
    }
}

/// The breast swap on a canonical 44-feature vector (raw or normalized).
pub fn swap_features(v: &[f64; FEATURES]) -> [f64; FEATURES] {
    let mut out = [0.0; FEATURES];
    out[..10].copy_from_slice(&v[20..30]); // left skin <- right skin
    out[10..20].copy_from_slice(&v[30..40]); // left int  <- right int
    out[20..30].copy_from_slice(&v[..10]);
    out[30..40].copy_from_slice(&v[10..20]);
    out[40] = v[42]; // t1_skin <- t2_skin
    out[41] = v[43];
    out[42] = v[40];
    out[43] = v[41];
    out
}

/// An in-memory dataset of exams.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub exams: Vec<MwrExam>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.exams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exams.is_empty()
    }

    /// (healthy, cancer) counts.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self
            .exams
            .iter()
            .filter(|e| e.label == Label::Cancer)
            .count();
        (self.exams.len() - pos, pos)
    }
}

/// Per-feature z-score statistics fitted on the training split only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Fit per-feature mean and population standard deviation; the std is
/// floored at 1e-8 so constant features normalize to zero.
pub fn fit_normalization(train: &Dataset) -> Result<NormStats> {
    if train.is_empty() {
        return Err(Error::invalid("fit_normalization: empty training split"));
    }
    let n = train.len() as f64;
    let mut mean = vec![0.0; FEATURES];
    for exam in &train.exams {
        for (m, &v) in mean.iter_mut().zip(exam.values.iter()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; FEATURES];
    for exam in &train.exams {
        for ((s, &m), &v) in std.iter_mut().zip(mean.iter()).zip(exam.values.iter()) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt().max(1e-8);
    }
    Ok(NormStats { mean, std })
}

/// Z-score an exam's 44 features with training statistics.
pub fn apply_normalization(exam: &MwrExam, stats: &NormStats) -> [f64; FEATURES] {
    let mut out = [0.0; FEATURES];
    for i in 0..FEATURES {
        out[i] = (exam.values[i] - stats.mean[i]) / stats.std[i];
    }
    out
}

/// Base-model layout: the canonical 44-feature order itself.
pub fn layout_base(v: &[f64; FEATURES]) -> [f64; FEATURES] {
    *v
}

/// Local layout: 18 (skin, internal) pairs for left points 0-8 then right
/// points 0-8. Axillary points and chest references are excluded.
pub fn layout_local(v: &[f64; FEATURES]) -> [[f64; 2]; 18] {
    let mut out = [[0.0; 2]; 18];
    for p in 0..9 {
        out[p] = [v[skin_index(Side::Left, p)], v[internal_index(Side::Left, p)]];
        out[9 + p] = [
            v[skin_index(Side::Right, p)],
            v[internal_index(Side::Right, p)],
        ];
    }
    out
}

/// Regional layout: one 24-vector per side — skin 0-9, internal 0-9, then
/// the four reference readings. Both sides carry the same references.
pub fn layout_regional(v: &[f64; FEATURES]) -> ([f64; 24], [f64; 24]) {
    let mut left = [0.0; 24];
    let mut right = [0.0; 24];
    left[..10].copy_from_slice(&v[..10]);
    left[10..20].copy_from_slice(&v[10..20]);
    right[..10].copy_from_slice(&v[20..30]);
    right[10..20].copy_from_slice(&v[30..40]);
    for (i, &r) in REF_INDICES.iter().enumerate() {
        left[20 + i] = v[r];
        right[20 + i] = v[r];
    }
    (left, right)
}

/// Global layout: the 44-vector and its breast swap.
pub fn layout_global(v: &[f64; FEATURES]) -> ([f64; FEATURES], [f64; FEATURES]) {
    (*v, swap_features(v))
}
