//! Robustness sweeps over test-time augmentations.

use crate::data::{AugmentationKind, AugmentationSpec, Dataset, NormStats, FEATURES};
use crate::error::Result;
use crate::eval::{confusion, mcc, THRESHOLD};
use crate::models::ModelBundle;
use crate::rng::derive_seed;

/// One grid point of a robustness sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessPoint {
    pub magnitude: f64,
    pub spec: AugmentationSpec,
}

/// The sweep grids, one per augmentation kind: Gaussian noise sigma 0 to
/// 0.5 in steps of 0.05, dropout rate 0 to 0.5 in steps of 0.1, global
/// shift -2 to +2 degrees C in steps of 0.5, and ring rotations k = 1..8
/// (k = 8 being the identity). Each grid point gets its own derived
/// augmentation seed.
pub fn default_robustness_grids(seed: u64) -> Vec<(&'static str, Vec<RobustnessPoint>)> {
    let mut grids = Vec::new();

    let noise: Vec<RobustnessPoint> = (0..=10)
        .map(|i| {
            let sigma = i as f64 * 0.05;
            RobustnessPoint {
                magnitude: sigma,
                spec: AugmentationSpec {
                    kind: AugmentationKind::GaussianNoise { sigma },
                    seed: derive_seed(seed, "noise", i),
                },
            }
        })
        .collect();
    grids.push(("noise", noise));

    let dropout: Vec<RobustnessPoint> = (0..=5)
        .map(|i| {
            let rate = i as f64 * 0.1;
            RobustnessPoint {
                magnitude: rate,
                spec: AugmentationSpec {
                    kind: AugmentationKind::PointDropout { rate },
                    seed: derive_seed(seed, "dropout", i),
                },
            }
        })
        .collect();
    grids.push(("dropout", dropout));

    let shift: Vec<RobustnessPoint> = (0..=8)
        .map(|i| {
            let delta = -2.0 + i as f64 * 0.5;
            RobustnessPoint {
                magnitude: delta,
                spec: AugmentationSpec {
                    kind: AugmentationKind::GlobalShift { delta },
                    seed: derive_seed(seed, "shift", i),
                },
            }
        })
        .collect();
    grids.push(("shift", shift));

    let rotation: Vec<RobustnessPoint> = (1..=8)
        .map(|k| RobustnessPoint {
            magnitude: k as f64,
            spec: AugmentationSpec {
                kind: AugmentationKind::Rotation { k: k as u32 },
                seed: derive_seed(seed, "rotation", k),
            },
        })
        .collect();
    grids.push(("rotation", rotation));

    grids
}

/// MCC of a frozen model on the test split under each augmentation spec.
pub fn robustness_sweep(
    bundle: &ModelBundle,
    stats: &NormStats,
    test: &Dataset,
    points: &[RobustnessPoint],
) -> Result<Vec<(f64, f64)>> {
    let labels: Vec<f64> = test.exams.iter().map(|e| e.label.as_f64()).collect();
    let mut results = Vec::with_capacity(points.len());
    for point in points {
        let mut features: Vec<[f64; FEATURES]> = Vec::with_capacity(test.len());
        for exam in &test.exams {
            features.push(crate::data::augmented_features(exam, stats, &point.spec)?);
        }
        let scores = bundle.scores(&features)?;
        let cm = confusion(&scores, &labels, THRESHOLD)?;
        results.push((point.magnitude, mcc(&cm)));
    }
    Ok(results)
}
