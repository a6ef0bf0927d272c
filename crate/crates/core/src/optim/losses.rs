//! Training losses: class-balanced binary cross-entropy and the four
//! batch-wise metric-learning losses.
//!
//! Everything here records onto the tape so gradients reach the model.
//! Scores from the tanh heads can be negative while BCE needs (0, 1), so
//! predictions are clamped to `[1e-7, 1 - 1e-7]` before the loss; the
//! classification threshold elsewhere is 0.5, which the clamp does not
//! move.

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

pub const PRED_CLAMP_LO: f64 = 1e-7;
pub const PRED_CLAMP_HI: f64 = 1.0 - 1e-7;

/// Per-class loss weights `w = N / (2 * n_class)`, which satisfy
/// `n_neg * w_neg == n_pos * w_pos` and reduce to 1 on balanced data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassWeights {
    pub w_neg: f64,
    pub w_pos: f64,
}

impl ClassWeights {
    pub fn from_counts(n_neg: usize, n_pos: usize) -> Result<ClassWeights> {
        if n_neg == 0 || n_pos == 0 {
            return Err(Error::invalid(format!(
                "class weights require both classes, got counts ({n_neg}, {n_pos})"
            )));
        }
        let n = (n_neg + n_pos) as f64;
        Ok(ClassWeights {
            w_neg: n / (2.0 * n_neg as f64),
            w_pos: n / (2.0 * n_pos as f64),
        })
    }

    pub fn for_label(&self, label: f64) -> f64 {
        if label >= 0.5 {
            self.w_pos
        } else {
            self.w_neg
        }
    }
}

/// Class-balanced BCE over a batch, recorded on the tape.
///
/// `scores` is the n x 1 raw model output; predictions are clamped before
/// the log terms. The result is the mean over the batch of
/// `w_y * (-y ln p - (1 - y) ln(1 - p))`.
pub fn class_balanced_bce(
    tape: &mut Tape,
    scores: Var,
    labels: &[f64],
    weights: &ClassWeights,
) -> Result<Var> {
    let (n, cols) = tape.shape(scores);
    if labels.is_empty() {
        return Err(Error::invalid("class_balanced_bce: empty batch"));
    }
    if cols != 1 || n != labels.len() {
        return Err(Error::shape(format!(
            "class_balanced_bce: scores are {n}x{cols}, labels have {}",
            labels.len()
        )));
    }
    let y = tape.leaf(Tensor::new(n, 1, labels.to_vec())?);
    let one_minus_y = tape.leaf(Tensor::new(
        n,
        1,
        labels.iter().map(|l| 1.0 - l).collect(),
    )?);
    let w = tape.leaf(Tensor::new(
        n,
        1,
        labels.iter().map(|&l| weights.for_label(l)).collect(),
    )?);
    let ones = tape.leaf(Tensor::full(n, 1, 1.0));

    let p = tape.clamp(scores, PRED_CLAMP_LO, PRED_CLAMP_HI);
    let ln_p = tape.ln(p);
    let q = tape.sub(ones, p)?;
    let ln_q = tape.ln(q);
    let pos_term = tape.mul(y, ln_p)?;
    let neg_term = tape.mul(one_minus_y, ln_q)?;
    let sum = tape.add(pos_term, neg_term)?;
    let nll = tape.scale(sum, -1.0);
    let weighted = tape.mul(w, nll)?;
    tape.mean_all(weighted)
}

/// Plain-value twin of [`class_balanced_bce`] for validation loss.
pub fn class_balanced_bce_value(
    scores: &[f64],
    labels: &[f64],
    weights: &ClassWeights,
) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::invalid(format!(
            "class_balanced_bce_value: {} scores, {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (&s, &y) in scores.iter().zip(labels) {
        let p = s.clamp(PRED_CLAMP_LO, PRED_CLAMP_HI);
        total += weights.for_label(y) * -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
    }
    Ok(total / scores.len() as f64)
}

/// Squared Euclidean distance between two embedding rows, on tape.
fn pair_sq_dist(tape: &mut Tape, emb: Var, i: usize, j: usize) -> Result<Var> {
    let a = tape.slice_rows(emb, i, 1)?;
    let b = tape.slice_rows(emb, j, 1)?;
    let d = tape.sub(a, b)?;
    let sq = tape.mul(d, d)?;
    tape.sum_all(sq)
}

/// Euclidean distance; `sqrt'(0) = 0` by the engine's convention, so
/// coincident embeddings contribute exact zeros without blowing up.
fn pair_dist(tape: &mut Tape, emb: Var, i: usize, j: usize) -> Result<Var> {
    let sq = pair_sq_dist(tape, emb, i, j)?;
    Ok(tape.sqrt(sq))
}

fn mean_of(tape: &mut Tape, terms: &[Var]) -> Result<Var> {
    let cat = tape.concat_cols(terms)?;
    tape.mean_all(cat)
}

fn same_label(a: f64, b: f64) -> bool {
    (a >= 0.5) == (b >= 0.5)
}

/// Pairwise contrastive loss: mean over all unordered pairs of
/// `d^2` (same label) or `max(0, margin - d)^2` (different labels).
pub fn contrastive_pair_loss(
    tape: &mut Tape,
    embeddings: Var,
    labels: &[f64],
    margin: f64,
) -> Result<Var> {
    let n = check_embeddings(tape, embeddings, labels)?;
    if n < 2 {
        return Err(Error::invalid(format!(
            "contrastive_pair_loss: need at least 2 samples, got {n}"
        )));
    }
    let mut terms = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if same_label(labels[i], labels[j]) {
                terms.push(pair_sq_dist(tape, embeddings, i, j)?);
            } else {
                let d = pair_dist(tape, embeddings, i, j)?;
                let m = tape.constant(margin);
                let gap = tape.sub(m, d)?;
                let hinge = tape.relu(gap);
                terms.push(tape.mul(hinge, hinge)?);
            }
        }
    }
    mean_of(tape, &terms)
}

/// Batch-hard triplet loss: per anchor, the hardest (farthest) positive
/// and hardest (closest) negative, hinged at zero and averaged over
/// anchors that have both. Degenerate batches contribute zero.
pub fn triplet_hard_loss(
    tape: &mut Tape,
    embeddings: Var,
    labels: &[f64],
    margin: f64,
) -> Result<Var> {
    let n = check_embeddings(tape, embeddings, labels)?;
    let dists = distance_grid(tape, embeddings, n)?;
    let mut terms = Vec::new();
    for a in 0..n {
        let positives: Vec<usize> = (0..n)
            .filter(|&j| j != a && same_label(labels[a], labels[j]))
            .collect();
        let negatives: Vec<usize> = (0..n)
            .filter(|&j| !same_label(labels[a], labels[j]))
            .collect();
        if positives.is_empty() || negatives.is_empty() {
            continue;
        }
        let hardest_pos = *positives
            .iter()
            .max_by(|&&x, &&y| value_of(tape, &dists, a, x).total_cmp(&value_of(tape, &dists, a, y)))
            .unwrap();
        let hardest_neg = *negatives
            .iter()
            .min_by(|&&x, &&y| value_of(tape, &dists, a, x).total_cmp(&value_of(tape, &dists, a, y)))
            .unwrap();
        let dp = dists[a][hardest_pos].unwrap();
        let dn = dists[a][hardest_neg].unwrap();
        let gap = tape.sub(dp, dn)?;
        let m = tape.constant(margin);
        let shifted = tape.add(gap, m)?;
        terms.push(tape.relu(shifted));
    }
    if terms.is_empty() {
        return Ok(tape.constant(0.0));
    }
    mean_of(tape, &terms)
}

/// Semi-hard triplet loss: per ordered (anchor, positive) pair, the
/// closest negative that is farther than the positive; when none exists,
/// fall back to the hardest (closest) negative. Hinged and averaged.
pub fn triplet_semihard_loss(
    tape: &mut Tape,
    embeddings: Var,
    labels: &[f64],
    margin: f64,
) -> Result<Var> {
    let n = check_embeddings(tape, embeddings, labels)?;
    let dists = distance_grid(tape, embeddings, n)?;
    let mut terms = Vec::new();
    for a in 0..n {
        let negatives: Vec<usize> = (0..n)
            .filter(|&j| !same_label(labels[a], labels[j]))
            .collect();
        if negatives.is_empty() {
            continue;
        }
        for p in 0..n {
            if p == a || !same_label(labels[a], labels[p]) {
                continue;
            }
            let d_ap = value_of(tape, &dists, a, p);
            let semi_hard = negatives
                .iter()
                .filter(|&&j| value_of(tape, &dists, a, j) > d_ap)
                .min_by(|&&x, &&y| {
                    value_of(tape, &dists, a, x).total_cmp(&value_of(tape, &dists, a, y))
                });
            let chosen = match semi_hard {
                Some(&j) => j,
                None => *negatives
                    .iter()
                    .min_by(|&&x, &&y| {
                        value_of(tape, &dists, a, x).total_cmp(&value_of(tape, &dists, a, y))
                    })
                    .unwrap(),
            };
            let dp = dists[a][p].unwrap();
            let dn = dists[a][chosen].unwrap();
            let gap = tape.sub(dp, dn)?;
            let m = tape.constant(margin);
            let shifted = tape.add(gap, m)?;
            terms.push(tape.relu(shifted));
        }
    }
    if terms.is_empty() {
        return Ok(tape.constant(0.0));
    }
    mean_of(tape, &terms)
}

/// N-pairs loss: one (anchor, positive) pair per class (the first two
/// occurrences in batch order); softmax cross-entropy of each anchor's
/// inner products against all pairs' positives. Fewer than two pairs is
/// degenerate and contributes zero.
pub fn npairs_loss(tape: &mut Tape, embeddings: Var, labels: &[f64]) -> Result<Var> {
    let n = check_embeddings(tape, embeddings, labels)?;
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for class in [0.0, 1.0] {
        let members: Vec<usize> = (0..n).filter(|&i| same_label(labels[i], class)).collect();
        if members.len() >= 2 {
            pairs.push((members[0], members[1]));
        }
    }
    if pairs.len() < 2 {
        return Ok(tape.constant(0.0));
    }
    let mut per_anchor = Vec::new();
    for (k, &(anchor, _)) in pairs.iter().enumerate() {
        // logits: anchor . positive_j for every pair j
        let mut logits = Vec::new();
        for &(_, positive) in &pairs {
            let a = tape.slice_rows(embeddings, anchor, 1)?;
            let p = tape.slice_rows(embeddings, positive, 1)?;
            let prod = tape.mul(a, p)?;
            logits.push(tape.sum_all(prod)?);
        }
        // log-sum-exp with a detached max shift: the shift is constant
        // w.r.t. parameters, and the softmax gradient is unchanged.
        let shift = logits
            .iter()
            .map(|&l| tape.value(l).data()[0])
            .fold(f64::NEG_INFINITY, f64::max);
        let shift_c = tape.constant(shift);
        let mut exps = Vec::new();
        for &l in &logits {
            let s = tape.sub(l, shift_c)?;
            exps.push(tape.exp(s));
        }
        let cat = tape.concat_cols(&exps)?;
        let total = tape.sum_all(cat)?;
        let ln_total = tape.ln(total);
        let lse = tape.add(ln_total, shift_c)?;
        per_anchor.push(tape.sub(lse, logits[k])?);
    }
    mean_of(tape, &per_anchor)
}

fn check_embeddings(tape: &Tape, embeddings: Var, labels: &[f64]) -> Result<usize> {
    let (n, _) = tape.shape(embeddings);
    if n != labels.len() {
        return Err(Error::shape(format!(
            "embeddings have {n} rows but {} labels",
            labels.len()
        )));
    }
    Ok(n)
}

fn distance_grid(tape: &mut Tape, emb: Var, n: usize) -> Result<Vec<Vec<Option<Var>>>> {
    let mut grid = vec![vec![None; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = pair_dist(tape, emb, i, j)?;
            grid[i][j] = Some(d);
            grid[j][i] = Some(d);
        }
    }
    Ok(grid)
}

fn value_of(tape: &Tape, grid: &[Vec<Option<Var>>], i: usize, j: usize) -> f64 {
    tape.value(grid[i][j].expect("distance grid entry")).data()[0]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn embed(tape: &mut Tape, rows: &[Vec<f64>]) -> Var {
        tape.leaf(Tensor::from_rows(rows).unwrap())
    }

    fn eval_scalar(tape: &Tape, v: Var) -> f64 {
        tape.value(v).data()[0]
    }

    #[test]
    fn balanced_counts_give_unit_weights_and_ln2_loss() {
        let w = ClassWeights::from_counts(10, 10).unwrap();
        assert_eq!(w.w_neg, 1.0);
        assert_eq!(w.w_pos, 1.0);
        let mut tape = Tape::new();
        let scores = tape.leaf(Tensor::new(1, 1, vec![0.5]).unwrap());
        let loss = class_balanced_bce(&mut tape, scores, &[1.0], &w).unwrap();
        assert!((eval_scalar(&tape, loss) - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn clinical_counts_give_weight_ratio_eight() {
        let w = ClassWeights::from_counts(4384, 548).unwrap();
        assert_eq!(w.w_pos / w.w_neg, 8.0);
        // exact per-class balance: n_neg * w_neg == n_pos * w_pos
        assert_eq!(4384.0 * w.w_neg, 548.0 * w.w_pos);
        assert_eq!(4384.0 * w.w_neg, 4932.0 / 2.0);
    }

    #[test]
    fn zero_class_count_is_rejected() {
        assert!(ClassWeights::from_counts(0, 5).is_err());
        assert!(ClassWeights::from_counts(5, 0).is_err());
    }

    #[test]
    fn perfect_predictions_have_negligible_loss() {
        let w = ClassWeights::from_counts(50, 10).unwrap();
        let mut tape = Tape::new();
        let scores = tape.leaf(Tensor::new(2, 1, vec![1.0, 0.0]).unwrap());
        let loss = class_balanced_bce(&mut tape, scores, &[1.0, 0.0], &w).unwrap();
        assert!(eval_scalar(&tape, loss) <= 1e-6 * w.w_pos.max(w.w_neg));
    }

    #[test]
    fn tape_and_value_versions_agree() {
        let w = ClassWeights::from_counts(7, 3).unwrap();
        let scores = vec![0.9, -0.2, 0.4, 0.55];
        let labels = vec![1.0, 0.0, 0.0, 1.0];
        let mut tape = Tape::new();
        let s = tape.leaf(Tensor::new(4, 1, scores.clone()).unwrap());
        let on_tape = class_balanced_bce(&mut tape, s, &labels, &w).unwrap();
        let plain = class_balanced_bce_value(&scores, &labels, &w).unwrap();
        assert!((eval_scalar(&tape, on_tape) - plain).abs() < 1e-15);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let w = ClassWeights::from_counts(1, 1).unwrap();
        assert!(class_balanced_bce_value(&[], &[], &w).is_err());
    }

    #[test]
    fn contrastive_identical_same_label_pair_is_zero() {
        let mut tape = Tape::new();
        let emb = embed(&mut tape, &[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let loss = contrastive_pair_loss(&mut tape, emb, &[1.0, 1.0], 1.0).unwrap();
        assert_eq!(eval_scalar(&tape, loss), 0.0);
    }

    #[test]
    fn contrastive_separated_diff_pair_is_zero() {
        let mut tape = Tape::new();
        let emb = embed(&mut tape, &[vec![0.0], vec![2.0]]);
        let loss = contrastive_pair_loss(&mut tape, emb, &[0.0, 1.0], 1.0).unwrap();
        assert_eq!(eval_scalar(&tape, loss), 0.0);
    }

    #[test]
    fn contrastive_coincident_diff_pair_pays_squared_margin() {
        let mut tape = Tape::new();
        let emb = embed(&mut tape, &[vec![0.3, -0.1], vec![0.3, -0.1]]);
        let loss = contrastive_pair_loss(&mut tape, emb, &[0.0, 1.0], 1.0).unwrap();
        assert_eq!(eval_scalar(&tape, loss), 1.0);
    }

    #[test]
    fn contrastive_requires_two_samples() {
        let mut tape = Tape::new();
        let emb = embed(&mut tape, &[vec![1.0]]);
        assert!(contrastive_pair_loss(&mut tape, emb, &[1.0], 1.0).is_err());
    }

    #[test]
    fn triplet_hard_hand_example_is_zero() {
        // a = 0, p = 0 (positive class), n = 2: max(0, 0 - 2 + 1) = 0
        let mut tape = Tape::new();
        let emb = embed(&mut tape, &[vec![0.0], vec![0.0], vec![2.0]]);
        let loss = triplet_hard_loss(&mut tape, emb, &[1.0, 1.0, 0.0], 1.0).unwrap();
        assert_eq!(eval_scalar(&tape, loss), 0.0);
    }

    #[test]
    fn triplet_hard_single_class_batch_is_zero() {
        let mut tape = Tape::new();
        let emb = embed(&mut tape, &[vec![0.0], vec![1.0], vec![2.0]]);
        let loss = triplet_hard_loss(&mut tape, emb, &[1.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(eval_scalar(&tape, loss), 0.0);
    }

    #[test]
    fn triplet_hard_collapsed_batch_pays_margin() {
        let mut tape = Tape::new();
        let emb = embed(&mut tape, &[vec![0.7], vec![0.7], vec![0.7], vec![0.7]]);
        let loss = triplet_hard_loss(&mut tape, emb, &[1.0, 1.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(eval_scalar(&tape, loss), 1.0);
    }

    #[test]
    fn semihard_separated_clusters_are_zero() {
        let mut tape = Tape::new();
        let emb = embed(
            &mut tape,
            &[vec![0.0], vec![0.1], vec![5.0], vec![5.1]],
        );
        let loss =
            triplet_semihard_loss(&mut tape, emb, &[0.0, 0.0, 1.0, 1.0], 1.0).unwrap();
        assert_eq!(eval_scalar(&tape, loss), 0.0);
    }

    #[test]
    fn semihard_collapsed_batch_pays_margin() {
        let mut tape = Tape::new();
        let emb = embed(&mut tape, &[vec![0.2], vec![0.2], vec![0.2]]);
        let loss = triplet_semihard_loss(&mut tape, emb, &[1.0, 1.0, 0.0], 0.75).unwrap();
        assert_eq!(eval_scalar(&tape, loss), 0.75);
    }

    #[test]
    fn semihard_is_nonnegative_on_random_batches() {
        let mut rng = crate::rng::Rng::new(12);
        for _ in 0..50 {
            let n = 2 + rng.below(6) as usize;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.uniform(-2.0, 2.0)).collect())
                .collect();
            let labels: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
            let mut tape = Tape::new();
            let emb = embed(&mut tape, &rows);
            let loss = triplet_semihard_loss(&mut tape, emb, &labels, 1.0).unwrap();
            assert!(eval_scalar(&tape, loss) >= 0.0);
        }
    }

    #[test]
    fn npairs_hand_example() {
        // anchor.own = 1, anchor.other = 0 for both pairs:
        // loss = ln(1 + e^{-1}) per anchor
        let mut tape = Tape::new();
        let emb = embed(
            &mut tape,
            &[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 1.0]],
        );
        let loss = npairs_loss(&mut tape, emb, &[0.0, 0.0, 1.0, 1.0]).unwrap();
        let expect = (1.0 + (-1.0f64).exp()).ln();
        assert!((eval_scalar(&tape, loss) - expect).abs() < 1e-12);
    }

    #[test]
    fn npairs_single_pair_is_zero() {
        let mut tape = Tape::new();
        let emb = embed(&mut tape, &[vec![1.0], vec![0.9], vec![0.2]]);
        let loss = npairs_loss(&mut tape, emb, &[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(eval_scalar(&tape, loss), 0.0);
    }

    #[test]
    fn npairs_is_invariant_under_sample_reordering() {
        // Reordering samples within a class keeps the same pair set.
        let rows = [vec![0.9, 0.1], vec![0.8, 0.3], vec![-0.2, 1.1], vec![0.1, 0.7]];
        let mut t1 = Tape::new();
        let e1 = embed(&mut t1, &rows.to_vec());
        let l1 = npairs_loss(&mut t1, e1, &[0.0, 0.0, 1.0, 1.0]).unwrap();
        // classes swapped in presentation order; pair set is unchanged
        let swapped = [rows[2].clone(), rows[3].clone(), rows[0].clone(), rows[1].clone()];
        let mut t2 = Tape::new();
        let e2 = embed(&mut t2, &swapped.to_vec());
        let l2 = npairs_loss(&mut t2, e2, &[1.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((eval_scalar(&t1, l1) - eval_scalar(&t2, l2)).abs() < 1e-12);
    }

    #[test]
    fn all_losses_are_nonnegative_and_zero_on_margin_respecting_clusters() {
        let mut tape = Tape::new();
        let emb = embed(
            &mut tape,
            &[vec![0.0, 0.0], vec![0.0, 0.0], vec![10.0, 0.0], vec![10.0, 0.0]],
        );
        let labels = [0.0, 0.0, 1.0, 1.0];
        let c = contrastive_pair_loss(&mut tape, emb, &labels, 1.0).unwrap();
        let th = triplet_hard_loss(&mut tape, emb, &labels, 1.0).unwrap();
        let ts = triplet_semihard_loss(&mut tape, emb, &labels, 1.0).unwrap();
        assert_eq!(eval_scalar(&tape, c), 0.0);
        assert_eq!(eval_scalar(&tape, th), 0.0);
        assert_eq!(eval_scalar(&tape, ts), 0.0);
    }

    #[test]
    fn contrastive_losses_are_differentiable_through_the_tape() {
        let mut tape = Tape::new();
        let raw = tape.leaf(Tensor::from_rows(&[
            vec![0.4, -0.3],
            vec![0.1, 0.8],
            vec![-0.5, 0.2],
            vec![0.9, 0.6],
        ]).unwrap());
        let labels = [1.0, 0.0, 1.0, 0.0];
        let loss = triplet_hard_loss(&mut tape, raw, &labels, 1.0).unwrap();
        tape.backward(loss).unwrap();
        let grad_norm: f64 = tape.grad(raw).data().iter().map(|g| g * g).sum();
        assert!(grad_norm > 0.0);
    }
}
