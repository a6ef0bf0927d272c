//! Test-time augmentations for the robustness sweeps.
//!
//! Four transforms, each governed by one magnitude:
//!
//! * Gaussian noise — added per feature in *normalized* space (the noise
//!   scale is dimensionless);
//! * point dropout — each of the 22 measurement sites is independently
//!   selected with the given rate; a selected site's skin and internal
//!   readings are replaced by the mean of the unselected sites' readings
//!   of the same mode (raw degrees C);
//! * global shift — a constant added to all 44 raw temperatures before
//!   normalization;
//! * rotation — the ring points 1-8 are cyclically shifted by k positions,
//!   the same k for both modes and both breasts; nipple, axillary, and
//!   reference readings stay put. k = 8 is the identity.
//!
//! Zero-magnitude specs are exact identities, bit for bit. Randomness is
//! derived from the [`AugmentationSpec`] seed and the exam id, so
//! augmentation of an exam does not depend on its position in the dataset.

use serde::{Deserialize, Serialize};

use crate::data::{
    apply_normalization, internal_index, skin_index, MwrExam, NormStats, Side, FEATURES,
    RING_POINTS,
};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentationKind {
    GaussianNoise { sigma: f64 },
    PointDropout { rate: f64 },
    GlobalShift { delta: f64 },
    Rotation { k: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    #[serde(flatten)]
    pub kind: AugmentationKind,
    pub seed: u64,
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            AugmentationKind::GaussianNoise { sigma } if sigma < 0.0 => Err(Error::invalid(
                format!("augment: sigma must be >= 0, got {sigma}"),
            )),
            AugmentationKind::PointDropout { rate } if !(0.0..=1.0).contains(&rate) => Err(
                Error::invalid(format!("augment: rate must be in [0, 1], got {rate}")),
            ),
            AugmentationKind::Rotation { k } if !(1..=8).contains(&k) => Err(Error::invalid(
                format!("augment: rotation k must be in 1..=8, got {k}"),
            )),
            _ => Ok(()),
        }
    }

    fn exam_rng(&self, exam: &MwrExam) -> Rng {
        Rng::new(derive_seed(self.seed, &exam.id, 0))
    }
}

/// Apply a raw-domain augmentation to an exam. Gaussian noise acts in
/// normalized space and leaves the raw exam unchanged here; use
/// [`augmented_features`] for the full evaluation path.
pub fn augment_exam(exam: &MwrExam, spec: &AugmentationSpec) -> Result<MwrExam> {
    spec.validate()?;
    let mut rng = spec.exam_rng(exam);
    let mut out = exam.clone();
    match spec.kind {
        AugmentationKind::GaussianNoise { .. } => {}
        AugmentationKind::PointDropout { rate } => apply_dropout(&mut out.values, rate, &mut rng),
        AugmentationKind::GlobalShift { delta } => {
            if delta != 0.0 {
                for v in &mut out.values {
                    *v += delta;
                }
            }
        }
        AugmentationKind::Rotation { k } => apply_rotation(&mut out.values, k),
    }
    Ok(out)
}

/// Augmented, normalized 44-feature vector for one exam: raw-domain
/// transforms happen before normalization, Gaussian noise after.
pub fn augmented_features(
    exam: &MwrExam,
    stats: &NormStats,
    spec: &AugmentationSpec,
) -> Result<[f64; FEATURES]> {
    spec.validate()?;
    match spec.kind {
        AugmentationKind::GaussianNoise { sigma } => {
            let mut features = apply_normalization(exam, stats);
            if sigma > 0.0 {
                let mut rng = spec.exam_rng(exam);
                for f in &mut features {
                    *f += sigma * rng.next_gaussian();
                }
            }
            Ok(features)
        }
        _ => Ok(apply_normalization(&augment_exam(exam, spec)?, stats)),
    }
}

fn site_readings(values: &[f64; FEATURES], site: usize) -> (usize, usize) {
    // Sites 0-9 left, 10-19 right, 20 = T1, 21 = T2 -> (skin idx, int idx).
    let _ = values;
    match site {
        0..=9 => (skin_index(Side::Left, site), internal_index(Side::Left, site)),
        10..=19 => (
            skin_index(Side::Right, site - 10),
            internal_index(Side::Right, site - 10),
        ),
        20 => (40, 41),
        _ => (42, 43),
    }
}

fn apply_dropout(values: &mut [f64; FEATURES], rate: f64, rng: &mut Rng) {
    let selected: Vec<bool> = (0..22).map(|_| rng.next_f64() < rate).collect();
    if !selected.iter().any(|&s| s) {
        return;
    }
    let (mut skin_sum, mut int_sum, mut kept) = (0.0, 0.0, 0usize);
    for (site, &sel) in selected.iter().enumerate() {
        if !sel {
            let (s, i) = site_readings(values, site);
            skin_sum += values[s];
            int_sum += values[i];
            kept += 1;
        }
    }
    // All sites selected: fall back to the overall pre-dropout mean.
    let (skin_mean, int_mean) = if kept == 0 {
        let mut s = 0.0;
        let mut i = 0.0;
        for site in 0..22 {
            let (si, ii) = site_readings(values, site);
            s += values[si];
            i += values[ii];
        }
        (s / 22.0, i / 22.0)
    } else {
        (skin_sum / kept as f64, int_sum / kept as f64)
    };
    for (site, &sel) in selected.iter().enumerate() {
        if sel {
            let (s, i) = site_readings(values, site);
            values[s] = skin_mean;
            values[i] = int_mean;
        }
    }
}

fn apply_rotation(values: &mut [f64; FEATURES], k: u32) {
    let k = k as usize % RING_POINTS;
    if k == 0 {
        return;
    }
    for side in [Side::Left, Side::Right] {
        for index_of in [skin_index, internal_index] {
            let old: Vec<f64> = (1..=RING_POINTS).map(|p| values[index_of(side, p)]).collect();
            for j in 1..=RING_POINTS {
                values[index_of(side, j)] = old[(j - 1 + k) % RING_POINTS];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate::{generate_synthetic, GeneratorConfig};
    use crate::data::{fit_normalization, Dataset};

    fn fixture() -> (Dataset, NormStats) {
        let ds = generate_synthetic(&GeneratorConfig {
            n_cases: 40,
            seed: 6,
            ..GeneratorConfig::default()
        })
        .unwrap();
        let stats = fit_normalization(&ds).unwrap();
        (ds, stats)
    }

    #[test]
    fn zero_magnitudes_are_bitwise_identities() {
        let (ds, stats) = fixture();
        let specs = [
            AugmentationSpec { kind: AugmentationKind::GaussianNoise { sigma: 0.0 }, seed: 1 },
            AugmentationSpec { kind: AugmentationKind::PointDropout { rate: 0.0 }, seed: 1 },
            AugmentationSpec { kind: AugmentationKind::GlobalShift { delta: 0.0 }, seed: 1 },
            AugmentationSpec { kind: AugmentationKind::Rotation { k: 8 }, seed: 1 },
        ];
        for exam in &ds.exams {
            let clean = apply_normalization(exam, &stats);
            for spec in &specs {
                let aug = augmented_features(exam, &stats, spec).unwrap();
                assert_eq!(aug, clean, "{spec:?}");
            }
        }
    }

    #[test]
    fn rotation_moves_ring_points_and_fixes_the_rest() {
        let (ds, _) = fixture();
        let exam = &ds.exams[0];
        let spec = AugmentationSpec { kind: AugmentationKind::Rotation { k: 3 }, seed: 1 };
        let rotated = augment_exam(exam, &spec).unwrap();
        // nipple, axillary, references untouched
        for side in [Side::Left, Side::Right] {
            assert_eq!(rotated.values[skin_index(side, 0)], exam.values[skin_index(side, 0)]);
            assert_eq!(rotated.values[skin_index(side, 9)], exam.values[skin_index(side, 9)]);
        }
        for r in crate::data::REF_INDICES {
            assert_eq!(rotated.values[r], exam.values[r]);
        }
        // ring point 1 now carries old point 4 (1 + 3)
        assert_eq!(
            rotated.values[skin_index(Side::Left, 1)],
            exam.values[skin_index(Side::Left, 4)]
        );
        // ring point 6 wraps to old point 1 (6 + 3 -> 9 -> 1)
        assert_eq!(
            rotated.values[internal_index(Side::Right, 6)],
            exam.values[internal_index(Side::Right, 1)]
        );
    }

    #[test]
    fn eight_single_rotations_compose_to_identity() {
        let (ds, _) = fixture();
        let spec = AugmentationSpec { kind: AugmentationKind::Rotation { k: 1 }, seed: 1 };
        let mut exam = ds.exams[0].clone();
        for _ in 0..8 {
            exam = augment_exam(&exam, &spec).unwrap();
        }
        assert_eq!(exam, ds.exams[0]);
    }

    #[test]
    fn full_dropout_uses_overall_mean() {
        let (ds, _) = fixture();
        let exam = &ds.exams[0];
        let skin_mean: f64 = (0..22)
            .map(|s| exam.values[site_readings(&exam.values, s).0])
            .sum::<f64>()
            / 22.0;
        let spec = AugmentationSpec { kind: AugmentationKind::PointDropout { rate: 1.0 }, seed: 2 };
        let dropped = augment_exam(exam, &spec).unwrap();
        for site in 0..22 {
            let (s, _) = site_readings(&dropped.values, site);
            assert!((dropped.values[s] - skin_mean).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_replaces_with_mean_of_remaining() {
        let (ds, _) = fixture();
        let spec = AugmentationSpec { kind: AugmentationKind::PointDropout { rate: 0.4 }, seed: 3 };
        for exam in ds.exams.iter().take(10) {
            let dropped = augment_exam(exam, &spec).unwrap();
            let changed: Vec<usize> = (0..22)
                .filter(|&s| {
                    let (si, _) = site_readings(&exam.values, s);
                    dropped.values[si] != exam.values[si]
                })
                .collect();
            if changed.is_empty() {
                continue;
            }
            // All changed skin readings share one value: the mean of the rest.
            let kept: Vec<usize> = (0..22).filter(|s| !changed.contains(s)).collect();
            let mean: f64 = kept
                .iter()
                .map(|&s| exam.values[site_readings(&exam.values, s).0])
                .sum::<f64>()
                / kept.len() as f64;
            for &s in &changed {
                let (si, _) = site_readings(&dropped.values, s);
                assert!((dropped.values[si] - mean).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shift_moves_all_raw_values() {
        let (ds, _) = fixture();
        let spec = AugmentationSpec { kind: AugmentationKind::GlobalShift { delta: 1.5 }, seed: 1 };
        let shifted = augment_exam(&ds.exams[0], &spec).unwrap();
        for (a, b) in shifted.values.iter().zip(ds.exams[0].values.iter()) {
            assert!((a - b - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_is_deterministic_per_exam_and_seed() {
        let (ds, stats) = fixture();
        let spec = AugmentationSpec { kind: AugmentationKind::GaussianNoise { sigma: 0.3 }, seed: 5 };
        let a = augmented_features(&ds.exams[1], &stats, &spec).unwrap();
        let b = augmented_features(&ds.exams[1], &stats, &spec).unwrap();
        assert_eq!(a, b);
        let other_seed = AugmentationSpec { kind: spec.kind, seed: 6 };
        let c = augmented_features(&ds.exams[1], &stats, &other_seed).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = [
            AugmentationSpec { kind: AugmentationKind::GaussianNoise { sigma: -0.1 }, seed: 1 },
            AugmentationSpec { kind: AugmentationKind::PointDropout { rate: 1.2 }, seed: 1 },
            AugmentationSpec { kind: AugmentationKind::Rotation { k: 0 }, seed: 1 },
            AugmentationSpec { kind: AugmentationKind::Rotation { k: 9 }, seed: 1 },
        ];
        for spec in bad {
            assert!(spec.validate().is_err(), "{spec:?}");
        }
    }
}
