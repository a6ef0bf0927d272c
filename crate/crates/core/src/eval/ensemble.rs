//! Ensemble baselines over the three sub-model scores.
//!
//! Every strategy consumes the 3-vector (local, regional, global score)
//! and emits a decision score compared against 0.5: averaging and majority
//! voting need no fitting; logistic regression, a linear SVM, and a small
//! CART tree are fitted on training-split scores. The fitted models are
//! deliberately small — three features, depth-3 tree — mirroring how
//! quickly these baselines overfit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaKind {
    Average,
    Majority,
    Logistic,
    LinearSvm,
    DecisionTree,
}

impl MetaKind {
    pub const ALL: [MetaKind; 5] = [
        MetaKind::Average,
        MetaKind::Majority,
        MetaKind::Logistic,
        MetaKind::LinearSvm,
        MetaKind::DecisionTree,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetaKind::Average => "average",
            MetaKind::Majority => "majority",
            MetaKind::Logistic => "logistic",
            MetaKind::LinearSvm => "linear_svm",
            MetaKind::DecisionTree => "decision_tree",
        }
    }
}

impl std::str::FromStr for MetaKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "average" => Ok(MetaKind::Average),
            "majority" => Ok(MetaKind::Majority),
            "logistic" => Ok(MetaKind::Logistic),
            "linear_svm" | "svm" => Ok(MetaKind::LinearSvm),
            "decision_tree" | "tree" => Ok(MetaKind::DecisionTree),
            other => Err(Error::invalid(format!("unknown meta-classifier `{other}`"))),
        }
    }
}

impl std::fmt::Display for MetaKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MetaClassifier {
    Average,
    Majority,
    Logistic { weights: [f64; 3], bias: f64 },
    LinearSvm { weights: [f64; 3], bias: f64 },
    DecisionTree { root: TreeNode },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        positive_fraction: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        below: Box<TreeNode>,
        at_or_above: Box<TreeNode>,
    },
}

/// Fit a meta-classifier on training sub-scores.
pub fn fit_meta(kind: MetaKind, sub_scores: &[[f64; 3]], labels: &[f64]) -> Result<MetaClassifier> {
    if sub_scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "fit_meta: {} rows vs {} labels",
            sub_scores.len(),
            labels.len()
        )));
    }
    match kind {
        MetaKind::Average => Ok(MetaClassifier::Average),
        MetaKind::Majority => Ok(MetaClassifier::Majority),
        MetaKind::Logistic => fit_logistic(sub_scores, labels),
        MetaKind::LinearSvm => fit_svm(sub_scores, labels),
        MetaKind::DecisionTree => {
            if sub_scores.is_empty() {
                return Err(Error::invalid("fit_meta: decision tree needs data"));
            }
            let indices: Vec<usize> = (0..sub_scores.len()).collect();
            Ok(MetaClassifier::DecisionTree {
                root: grow_tree(sub_scores, labels, &indices, 0),
            })
        }
    }
}

/// Decision scores for a batch of sub-score rows.
pub fn meta_predict(clf: &MetaClassifier, sub_scores: &[[f64; 3]]) -> Vec<f64> {
    sub_scores
        .iter()
        .map(|row| match clf {
            MetaClassifier::Average => (row[0] + row[1] + row[2]) / 3.0,
            MetaClassifier::Majority => {
                let votes = row.iter().filter(|&&s| s >= THRESHOLD).count();
                f64::from(votes >= 2)
            }
            MetaClassifier::Logistic { weights, bias } => sigmoid(dot(weights, row) + bias),
            // Monotone squash of the margin keeps the 0.5 threshold at the
            // decision boundary.
            MetaClassifier::LinearSvm { weights, bias } => sigmoid(dot(weights, row) + bias),
            MetaClassifier::DecisionTree { root } => tree_score(root, row),
        })
        .collect()
}

fn dot(w: &[f64; 3], x: &[f64; 3]) -> f64 {
    w[0] * x[0] + w[1] * x[1] + w[2] * x[2]
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Full-batch gradient descent on the mean log-loss, to convergence
/// (gradient norm < 1e-8) or 10k iterations.
fn fit_logistic(rows: &[[f64; 3]], labels: &[f64]) -> Result<MetaClassifier> {
    if rows.is_empty() {
        return Err(Error::invalid("fit_meta: logistic regression needs data"));
    }
    let n = rows.len() as f64;
    let mut w = [0.0f64; 3];
    let mut b = 0.0f64;
    let lr = 0.5;
    for _ in 0..10_000 {
        let mut gw = [0.0f64; 3];
        let mut gb = 0.0f64;
        for (x, &y) in rows.iter().zip(labels) {
            let err = sigmoid(dot(&w, x) + b) - y;
            for k in 0..3 {
                gw[k] += err * x[k] / n;
            }
            gb += err / n;
        }
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < 1e-8 {
            break;
        }
        for k in 0..3 {
            w[k] -= lr * gw[k];
        }
        b -= lr * gb;
    }
    Ok(MetaClassifier::Logistic { weights: w, bias: b })
}

/// Subgradient descent on mean hinge loss with l2 penalty (lambda = 1e-3,
/// bias unregularized), constant step 0.05, 10k iterations.
fn fit_svm(rows: &[[f64; 3]], labels: &[f64]) -> Result<MetaClassifier> {
    if rows.is_empty() {
        return Err(Error::invalid("fit_meta: svm needs data"));
    }
    let lambda = 1e-3;
    let lr = 0.05;
    let n = rows.len() as f64;
    let mut w = [0.0f64; 3];
    let mut b = 0.0f64;
    for _ in 0..10_000 {
        let mut gw = [w[0] * lambda, w[1] * lambda, w[2] * lambda];
        let mut gb = 0.0f64;
        for (x, &label) in rows.iter().zip(labels) {
            let y = if label >= 0.5 { 1.0 } else { -1.0 };
            if y * (dot(&w, x) + b) < 1.0 {
                for k in 0..3 {
                    gw[k] -= y * x[k] / n;
                }
                gb -= y / n;
            }
        }
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < 1e-8 {
            break;
        }
        for k in 0..3 {
            w[k] -= lr * gw[k];
        }
        b -= lr * gb;
    }
    Ok(MetaClassifier::LinearSvm { weights: w, bias: b })
}

const TREE_MAX_DEPTH: usize = 3;
const TREE_MIN_LEAF: usize = 5;

fn positive_fraction(labels: &[f64], indices: &[usize]) -> f64 {
    indices.iter().filter(|&&i| labels[i] >= 0.5).count() as f64 / indices.len() as f64
}

fn gini(labels: &[f64], indices: &[usize]) -> f64 {
    let p = positive_fraction(labels, indices);
    2.0 * p * (1.0 - p)
}

/// CART with Gini impurity; deterministic tie-breaking by (feature,
/// threshold) order.
fn grow_tree(rows: &[[f64; 3]], labels: &[f64], indices: &[usize], depth: usize) -> TreeNode {
    let p = positive_fraction(labels, indices);
    if depth >= TREE_MAX_DEPTH || indices.len() < 2 * TREE_MIN_LEAF || p == 0.0 || p == 1.0 {
        return TreeNode::Leaf { positive_fraction: p };
    }
    let mut best: Option<(f64, usize, f64)> = None; // (weighted gini, feature, threshold)
    for feature in 0..3 {
        let mut values: Vec<f64> = indices.iter().map(|&i| rows[i][feature]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for pair in values.windows(2) {
            let threshold = (pair[0] + pair[1]) / 2.0;
            let below: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|&i| rows[i][feature] < threshold)
                .collect();
            let above: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|&i| rows[i][feature] >= threshold)
                .collect();
            if below.len() < TREE_MIN_LEAF || above.len() < TREE_MIN_LEAF {
                continue;
            }
            let weighted = (below.len() as f64 * gini(labels, &below)
                + above.len() as f64 * gini(labels, &above))
                / indices.len() as f64;
            if best.map_or(true, |(score, _, _)| weighted < score) {
                best = Some((weighted, feature, threshold));
            }
        }
    }
    match best {
        None => TreeNode::Leaf { positive_fraction: p },
        Some((_, feature, threshold)) => {
            let below_idx: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|&i| rows[i][feature] < threshold)
                .collect();
            let above_idx: Vec<usize> = indices
                .iter()
                .copied()
                .filter(|&i| rows[i][feature] >= threshold)
                .collect();
            TreeNode::Split {
                feature,
                threshold,
                below: Box::new(grow_tree(rows, labels, &below_idx, depth + 1)),
                at_or_above: Box::new(grow_tree(rows, labels, &above_idx, depth + 1)),
            }
        }
    }
}

fn tree_score(node: &TreeNode, row: &[f64; 3]) -> f64 {
    match node {
        TreeNode::Leaf { positive_fraction } => *positive_fraction,
        TreeNode::Split { feature, threshold, below, at_or_above } => {
            if row[*feature] < *threshold {
                tree_score(below, row)
            } else {
                tree_score(at_or_above, row)
            }
        }
    }
}
