//! Evaluation: confusion counts, MCC, accuracy, ROC AUC, and multi-seed
//! aggregation.
//!
//! Scores are compared against a fixed 0.5 threshold (score >= threshold
//! predicts positive). The AUC uses the Mann-Whitney formulation — the
//! fraction of (positive, negative) pairs ranked correctly, ties counting
//! one half — computed via average ranks.

mod embedding;
mod ensemble;
mod robustness;

pub use embedding::{embedding_distance_stats, EmbeddingStats};
pub use ensemble::{fit_meta, meta_predict, MetaClassifier, MetaKind};
pub use robustness::{default_robustness_grids, robustness_sweep, RobustnessPoint};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelKind;

/// Classification threshold used across the project.
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tpc: usize,
    pub tnc: usize,
    pub fpc: usize,
    pub fnc: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tpc + self.tnc + self.fpc + self.fnc
    }
}

/// Count predictions at a threshold: positive iff `score >= threshold`.
pub fn confusion(scores: &[f64], labels: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "confusion: {} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix { tpc: 0, tnc: 0, fpc: 0, fnc: 0 };
    for (&s, &y) in scores.iter().zip(labels) {
        let predicted = s >= threshold;
        let actual = y >= 0.5;
        match (predicted, actual) {
            (true, true) => cm.tpc += 1,
            (false, false) => cm.tnc += 1,
            (true, false) => cm.fpc += 1,
            (false, true) => cm.fnc += 1,
        }
    }
    Ok(cm)
}

/// Matthews correlation coefficient; any zero factor in the denominator
/// defines the result as 0.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let (tp, tn, fp, fnc) = (cm.tpc as f64, cm.tnc as f64, cm.fpc as f64, cm.fnc as f64);
    let denom_sq = (tp + fp) * (tp + fnc) * (tn + fp) * (tn + fnc);
    if denom_sq == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fnc) / denom_sq.sqrt()
}

pub fn accuracy(cm: &ConfusionMatrix) -> f64 {
    (cm.tpc + cm.tnc) as f64 / cm.total() as f64
}

/// ROC AUC via average ranks (Mann-Whitney). Requires both classes.
pub fn roc_auc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::invalid("roc_auc: empty or mismatched inputs"));
    }
    let n_pos = labels.iter().filter(|&&y| y >= 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::invalid("roc_auc: both classes must be present"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));

    let mut rank_pos_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1 ..= j+1 share the average rank.
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if labels[idx] >= 0.5 {
                rank_pos_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_pos_sum - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Metrics of one trained run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub mcc: f64,
    pub accuracy: f64,
    pub roc_auc: f64,
}

/// Evaluate raw scores against labels at the fixed threshold.
pub fn evaluate_scores(scores: &[f64], labels: &[f64], seed: u64) -> Result<SeedMetrics> {
    let cm = confusion(scores, labels, THRESHOLD)?;
    Ok(SeedMetrics {
        seed,
        mcc: mcc(&cm),
        accuracy: accuracy(&cm),
        roc_auc: roc_auc(scores, labels)?,
    })
}

/// Population (n-denominator) mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and population std over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Aggregate {
        let (mean, std) = mean_std(values);
        Aggregate { mean, std }
    }

    /// Report style: two-decimal mean, three-decimal std.
    pub fn formatted(&self) -> String {
        format!("{:.2} ± {:.3}", self.mean, self.std)
    }
}

/// Multi-seed report for one model/configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: ModelKind,
    pub config_hash: String,
    pub per_seed: Vec<SeedMetrics>,
    pub mcc: Aggregate,
    pub accuracy: Aggregate,
    pub roc_auc: Aggregate,
}

/// Aggregate per-seed metrics (at least two runs).
pub fn aggregate_runs(
    model: ModelKind,
    config_hash: &str,
    runs: &[SeedMetrics],
) -> Result<MetricsReport> {
    if runs.len() < 2 {
        return Err(Error::invalid(format!(
            "aggregate_runs: need >= 2 runs, got {}",
            runs.len()
        )));
    }
    let collect = |f: fn(&SeedMetrics) -> f64| runs.iter().map(f).collect::<Vec<_>>();
    Ok(MetricsReport {
        model,
        config_hash: config_hash.to_string(),
        per_seed: runs.to_vec(),
        mcc: Aggregate::of(&collect(|r| r.mcc)),
        accuracy: Aggregate::of(&collect(|r| r.accuracy)),
        roc_auc: Aggregate::of(&collect(|r| r.roc_auc)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    /// Brute-force AUC oracle: enumerate all (positive, negative) pairs.
    pub(crate) fn auc_brute_force(scores: &[f64], labels: &[f64]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            if yi < 0.5 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj >= 0.5 {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[0.9, 0.1], &[1.0, 0.0], 0.5).unwrap();
        assert_eq!((cm.tpc, cm.tnc, cm.fpc, cm.fnc), (1, 1, 0, 0));

        // score exactly at the threshold predicts positive
        let cm = confusion(&[0.5], &[1.0], 0.5).unwrap();
        assert_eq!(cm.tpc, 1);

        let cm = confusion(&[0.3, 0.7, 0.6, 0.2], &[0.0, 1.0, 0.0, 1.0], 0.5).unwrap();
        assert_eq!(cm.total(), 4);
        assert!(confusion(&[0.5], &[1.0, 0.0], 0.5).is_err());
        assert!(confusion(&[], &[], 0.5).is_err());
    }

    #[test]
    fn mcc_hand_example_is_exact() {
        let cm = ConfusionMatrix { tpc: 9, tnc: 85, fpc: 3, fnc: 3 };
        assert_eq!(mcc(&cm), 756.0 / 1056.0);
        assert_eq!(accuracy(&cm), 0.94);
    }

    #[test]
    fn mcc_degenerate_and_perfect_cases() {
        let perfect = ConfusionMatrix { tpc: 10, tnc: 20, fpc: 0, fnc: 0 };
        assert_eq!(mcc(&perfect), 1.0);
        // all predictions one class: zero denominator factor
        let all_positive = ConfusionMatrix { tpc: 10, tnc: 0, fpc: 20, fnc: 0 };
        assert_eq!(mcc(&all_positive), 0.0);
        let all_negative = ConfusionMatrix { tpc: 0, tnc: 20, fpc: 0, fnc: 10 };
        assert_eq!(mcc(&all_negative), 0.0);
        let all_wrong = ConfusionMatrix { tpc: 0, tnc: 0, fpc: 15, fnc: 15 };
        assert_eq!(accuracy(&all_wrong), 0.0);
    }

    #[test]
    fn mcc_flips_sign_when_predictions_are_complemented() {
        let mut rng = Rng::new(3);
        for _ in 0..50 {
            // class-balanced counts keep the factor product symmetric
            let tp = 1 + rng.below(50) as usize;
            let fnc = 1 + rng.below(50) as usize;
            let tn = 1 + rng.below(50) as usize;
            let fp = 1 + rng.below(50) as usize;
            let cm = ConfusionMatrix { tpc: tp, tnc: tn, fpc: fp, fnc };
            let flipped = ConfusionMatrix { tpc: fnc, tnc: fp, fpc: tn, fnc: tp };
            assert_eq!(mcc(&flipped), -mcc(&cm));
        }
    }

    #[test]
    fn auc_worked_example() {
        let scores = [0.1, 0.4, 0.35, 0.8];
        let labels = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(roc_auc(&scores, &labels).unwrap(), 0.75);
        assert_eq!(auc_brute_force(&scores, &labels), 0.75);
    }

    #[test]
    fn auc_perfect_and_all_tied() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0.0, 0.0, 1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.4; 6], &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
        assert!(roc_auc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn auc_matches_brute_force_on_random_sets() {
        let mut rng = Rng::new(17);
        for _ in 0..200 {
            let n = 5 + rng.below(40) as usize;
            let mut scores: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
            // inject ties
            for k in 0..n / 4 {
                scores[k] = 0.5;
            }
            let mut labels: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
            labels[0] = 1.0;
            labels[1] = 0.0;
            let fast = roc_auc(&scores, &labels).unwrap();
            let slow = auc_brute_force(&scores, &labels);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn auc_is_invariant_under_monotone_transforms() {
        let mut rng = Rng::new(23);
        let scores: Vec<f64> = (0..30).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let mut labels: Vec<f64> = (0..30).map(|_| rng.below(2) as f64).collect();
        labels[0] = 1.0;
        labels[1] = 0.0;
        let base = roc_auc(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| s.tanh()).collect();
        let scaled: Vec<f64> = scores.iter().map(|s| 3.0 * s + 10.0).collect();
        assert!((roc_auc(&squashed, &labels).unwrap() - base).abs() < 1e-12);
        assert!((roc_auc(&scaled, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn metrics_match_brute_force_recomputation() {
        let mut rng = Rng::new(29);
        for _ in 0..200 {
            let n = 10 + rng.below(200) as usize;
            let scores: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
            let mut labels: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
            labels[0] = 1.0;
            labels[1] = 0.0;
            let cm = confusion(&scores, &labels, THRESHOLD).unwrap();
            // brute force: recount from raw predictions
            let (mut tp, mut tn, mut fp, mut fnc) = (0usize, 0usize, 0usize, 0usize);
            for (s, y) in scores.iter().zip(&labels) {
                match (*s >= 0.5, *y >= 0.5) {
                    (true, true) => tp += 1,
                    (false, false) => tn += 1,
                    (true, false) => fp += 1,
                    (false, true) => fnc += 1,
                }
            }
            assert_eq!((cm.tpc, cm.tnc, cm.fpc, cm.fnc), (tp, tn, fp, fnc));
            assert_eq!(cm.total(), n);
            let expect_mcc = {
                let (tp, tn, fp, fnc) = (tp as f64, tn as f64, fp as f64, fnc as f64);
                let den = ((tp + fp) * (tp + fnc) * (tn + fp) * (tn + fnc)).sqrt();
                if den == 0.0 { 0.0 } else { (tp * tn - fp * fnc) / den }
            };
            assert_eq!(mcc(&cm), expect_mcc);
            assert_eq!(accuracy(&cm), (tp + tn) as f64 / n as f64);
        }
    }

    #[test]
    fn aggregation_examples() {
        let runs = [
            SeedMetrics { seed: 1, mcc: 0.6, accuracy: 0.9, roc_auc: 0.95 },
            SeedMetrics { seed: 2, mcc: 0.7, accuracy: 0.9, roc_auc: 0.95 },
            SeedMetrics { seed: 3, mcc: 0.8, accuracy: 0.9, roc_auc: 0.95 },
        ];
        let report = aggregate_runs(ModelKind::Rmwr, "abc", &runs).unwrap();
        assert!((report.mcc.mean - 0.70).abs() < 1e-12);
        assert_eq!(report.accuracy.std, 0.0);
        assert!(report.mcc.formatted().starts_with("0.70 ± 0."));

        let identical = [runs[0], runs[0]];
        let report = aggregate_runs(ModelKind::Base, "x", &identical).unwrap();
        assert_eq!(report.mcc.std, 0.0);

        assert!(aggregate_runs(ModelKind::Base, "x", &runs[..1]).is_err());
    }

    #[test]
    fn formatted_report_matches_table_style() {
        let agg = Aggregate { mean: 0.7412, std: 0.0183 };
        assert_eq!(agg.formatted(), "0.74 ± 0.018");
    }
}
