//! Embedding-space distance statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::mean_std;

/// Mean and population std of pairwise Euclidean distances, within and
/// between classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStats {
    pub within_mean: f64,
    pub within_std: f64,
    pub between_mean: f64,
    pub between_std: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance statistics over all unordered sample pairs, split into
/// within-class and between-class populations. Requires at least two
/// samples per class.
pub fn embedding_distance_stats(
    embeddings: &[Vec<f64>],
    labels: &[f64],
) -> Result<EmbeddingStats> {
    if embeddings.len() != labels.len() {
        return Err(Error::invalid(format!(
            "embedding stats: {} embeddings vs {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y >= 0.5).count();
    let n_neg = labels.len() - n_pos;
    if n_pos < 2 || n_neg < 2 {
        return Err(Error::invalid(format!(
            "embedding stats: need >= 2 samples per class, got ({n_neg}, {n_pos})"
        )));
    }
    let mut within = Vec::new();
    let mut between = Vec::new();
    for i in 0..embeddings.len() {
        for j in (i + 1)..embeddings.len() {
            let d = euclidean(&embeddings[i], &embeddings[j]);
            if (labels[i] >= 0.5) == (labels[j] >= 0.5) {
                within.push(d);
            } else {
                between.push(d);
            }
        }
    }
    let (within_mean, within_std) = mean_std(&within);
    let (between_mean, between_std) = mean_std(&between);
    Ok(EmbeddingStats { within_mean, within_std, between_mean, between_std })
}
