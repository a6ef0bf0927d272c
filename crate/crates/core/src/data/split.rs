//! Stratified splitting and training-set subsampling.
//!
//! Membership is decided per class on a seeded shuffled order; the split
//! contents are then emitted in original dataset order, so a fraction of
//! 1.0 reproduces the input split exactly and smaller fractions nest
//! (25% of a split is a subset of its 50%, which is a subset of its 75%).

use crate::data::{Dataset, Label};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};

/// Stratified train/validation/test split.
///
/// Per class, `round(train_frac * k)` cases go to train and
/// `round(val_frac * k)` to validation; the remainder is the test split.
/// The class ratio of every split is within one case of the global ratio,
/// and the three splits are disjoint and exhaustive.
pub fn stratified_split(
    dataset: &Dataset,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if !(0.0..1.0).contains(&train_frac) || !(0.0..1.0).contains(&val_frac) || train_frac + val_frac >= 1.0 {
        return Err(Error::invalid(format!(
            "stratified_split: fractions ({train_frac}, {val_frac}) must be in (0, 1) and sum below 1"
        )));
    }
    let mut assignment = vec![2u8; dataset.len()]; // 0 train, 1 val, 2 test
    for (class, label) in [Label::Healthy, Label::Cancer].into_iter().enumerate() {
        let indices: Vec<usize> = dataset
            .exams
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == label)
            .map(|(i, _)| i)
            .collect();
        if indices.len() < 5 {
            return Err(Error::invalid(format!(
                "stratified_split: class {class} has only {} members (need >= 5)",
                indices.len()
            )));
        }
        let mut order = indices;
        let mut rng = Rng::new(derive_seed(seed, "stratified-split", class as u64));
        rng.shuffle(&mut order);
        let k = order.len();
        let n_train = (train_frac * k as f64).round() as usize;
        let n_val = ((val_frac * k as f64).round() as usize).min(k - n_train);
        for (rank, &idx) in order.iter().enumerate() {
            assignment[idx] = if rank < n_train {
                0
            } else if rank < n_train + n_val {
                1
            } else {
                2
            };
        }
    }

    let collect = |which: u8| Dataset {
        exams: dataset
            .exams
            .iter()
            .enumerate()
            .filter(|(i, _)| assignment[*i] == which)
            .map(|(_, e)| e.clone())
            .collect(),
    };
    Ok((collect(0), collect(1), collect(2)))
}

/// Class-stratified random subset of a training split.
///
/// Seeded per class independently of `fraction`, so smaller fractions are
/// subsets of larger ones; `fraction == 1.0` returns the split unchanged.
pub fn subsample_fraction(train: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if fraction <= 0.0 || fraction > 1.0 {
        return Err(Error::invalid(format!(
            "subsample_fraction: fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut keep = vec![false; train.len()];
    for (class, label) in [Label::Healthy, Label::Cancer].into_iter().enumerate() {
        let indices: Vec<usize> = train
            .exams
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label == label)
            .map(|(i, _)| i)
            .collect();
        let mut order = indices;
        let mut rng = Rng::new(derive_seed(seed, "subsample", class as u64));
        rng.shuffle(&mut order);
        let n_keep = (fraction * order.len() as f64).round() as usize;
        for &idx in order.iter().take(n_keep) {
            keep[idx] = true;
        }
    }
    Ok(Dataset {
        exams: train
            .exams
            .iter()
            .enumerate()
            .filter(|(i, _)| keep[*i])
            .map(|(_, e)| e.clone())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate::{generate_synthetic, GeneratorConfig};
    use crate::data::Label;
    use std::collections::BTreeSet;

    fn dataset_100_with_10_positive() -> Dataset {
        generate_synthetic(&GeneratorConfig {
            n_cases: 100,
            positive_fraction: 0.1,
            seed: 5,
            ..GeneratorConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn sixty_twenty_twenty_with_exact_strata() {
        let ds = dataset_100_with_10_positive();
        let (train, val, test) = stratified_split(&ds, 0.6, 0.2, 1).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (60, 20, 20));
        assert_eq!(train.class_counts().1, 6);
        assert_eq!(val.class_counts().1, 2);
        assert_eq!(test.class_counts().1, 2);
    }

    #[test]
    fn splits_are_disjoint_and_exhaustive() {
        let ds = dataset_100_with_10_positive();
        let (train, val, test) = stratified_split(&ds, 0.6, 0.2, 3).unwrap();
        let ids = |d: &Dataset| d.exams.iter().map(|e| e.id.clone()).collect::<BTreeSet<_>>();
        let (a, b, c) = (ids(&train), ids(&val), ids(&test));
        assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        let mut union = a;
        union.extend(b);
        union.extend(c);
        assert_eq!(union, ids(&ds));
    }

    #[test]
    fn same_seed_same_split() {
        let ds = dataset_100_with_10_positive();
        let s1 = stratified_split(&ds, 0.6, 0.2, 7).unwrap();
        let s2 = stratified_split(&ds, 0.6, 0.2, 7).unwrap();
        assert_eq!(s1, s2);
        let s3 = stratified_split(&ds, 0.6, 0.2, 8).unwrap();
        assert_ne!(s1.0, s3.0);
    }

    #[test]
    fn too_small_class_is_rejected() {
        let mut ds = dataset_100_with_10_positive();
        ds.exams.retain(|e| e.label == Label::Healthy);
        for e in ds.exams.iter_mut().take(3) {
            e.label = Label::Cancer;
        }
        assert!(stratified_split(&ds, 0.6, 0.2, 1).is_err());
    }

    #[test]
    fn subsample_half_of_sixty_with_six_positive() {
        let ds = dataset_100_with_10_positive();
        let (train, _, _) = stratified_split(&ds, 0.6, 0.2, 1).unwrap();
        let half = subsample_fraction(&train, 0.5, 11).unwrap();
        assert_eq!(half.len(), 30);
        assert_eq!(half.class_counts().1, 3);
    }

    #[test]
    fn full_fraction_is_identity() {
        let ds = dataset_100_with_10_positive();
        let (train, _, _) = stratified_split(&ds, 0.6, 0.2, 1).unwrap();
        assert_eq!(subsample_fraction(&train, 1.0, 11).unwrap(), train);
    }

    #[test]
    fn fractions_nest() {
        let ds = dataset_100_with_10_positive();
        let (train, _, _) = stratified_split(&ds, 0.6, 0.2, 1).unwrap();
        let ids = |d: &Dataset| d.exams.iter().map(|e| e.id.clone()).collect::<BTreeSet<_>>();
        let q = ids(&subsample_fraction(&train, 0.25, 9).unwrap());
        let h = ids(&subsample_fraction(&train, 0.5, 9).unwrap());
        let t = ids(&subsample_fraction(&train, 0.75, 9).unwrap());
        assert!(q.is_subset(&h));
        assert!(h.is_subset(&t));
    }

    #[test]
    fn bad_fraction_is_rejected() {
        let ds = dataset_100_with_10_positive();
        assert!(subsample_fraction(&ds, 0.0, 1).is_err());
        assert!(subsample_fraction(&ds, -0.5, 1).is_err());
        assert!(subsample_fraction(&ds, 1.5, 1).is_err());
    }
}
