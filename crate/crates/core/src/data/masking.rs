use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::DatasetSplit;
use crate::error::{Error, Result};

/// A dataset with a labeled subset. Unlabeled items expose images only.
#[derive(Debug, Clone)]
pub struct SemiSupervisedView {
    pub split: Arc<DatasetSplit>,
    pub labeled_mask: Vec<bool>,
    pub labeled_fraction: f64,
    pub seed: u64,
}

impl SemiSupervisedView {
    pub fn labeled_indices(&self) -> Vec<usize> {
        (0..self.labeled_mask.len())
            .filter(|&i| self.labeled_mask[i])
            .collect()
    }

    pub fn unlabeled_indices(&self) -> Vec<usize> {
        (0..self.labeled_mask.len())
            .filter(|&i| !self.labeled_mask[i])
            .collect()
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled_mask.iter().filter(|&&m| m).count()
    }

    /// Labeled items per class.
    pub fn labeled_per_class(&self) -> Vec<usize> {
        let mut counts = vec![0; self.split.n_classes()];
        for (i, &y) in self.split.labels().iter().enumerate() {
            if self.labeled_mask[i] {
                counts[y] += 1;
            }
        }
        counts
    }
}

// floor() that tolerates representation error such as 0.1 * 30 = 3.0000000000000004.
fn robust_floor(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

/// Per-class quotas: the overall total is `round(fraction * N)`, distributed by
/// largest remainder so each class gets `floor` or `floor + 1` of its
/// proportional share.
fn quotas(counts: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    let target = ((fraction * total as f64) + 1e-9).round() as usize;
    let mut quota: Vec<usize> = counts
        .iter()
        .map(|&c| robust_floor(fraction * c as f64).min(c))
        .collect();
    let assigned: usize = quota.iter().sum();
    let mut order: Vec<usize> = (0..counts.len())
        .filter(|&c| quota[c] < counts[c])
        .collect();
    let rem = |c: usize| fraction * counts[c] as f64 - quota[c] as f64;
    order.sort_by(|&a, &b| rem(b).total_cmp(&rem(a)).then(a.cmp(&b)));
    for &c in order.iter().take(target.saturating_sub(assigned)) {
        quota[c] += 1;
    }
    quota
}

/// Stratified, seeded label mask over `split`.
pub fn mask_labels(
    split: Arc<DatasetSplit>,
    fraction: f64,
    seed: u64,
) -> Result<SemiSupervisedView> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "labeled fraction must be in (0, 1], got {fraction}"
        )));
    }
    let n_classes = split.n_classes();
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &y) in split.labels().iter().enumerate() {
        members[y].push(i);
    }
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let mut quota = quotas(&counts, fraction);
    for c in 0..n_classes {
        if quota[c] == 0 && counts[c] > 0 {
            log::warn!(
                "labeled fraction {fraction} gives class {c} ({}) no labeled items; labeling one",
                split.class_names[c]
            );
            quota[c] = 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = vec![false; split.len()];
    for (c, pool) in members.iter_mut().enumerate() {
        pool.shuffle(&mut rng);
        for &i in pool.iter().take(quota[c]) {
            mask[i] = true;
        }
    }
    Ok(SemiSupervisedView {
        split,
        labeled_mask: mask,
        labeled_fraction: fraction,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Split;
    use ndarray::Array4;

    fn split_with_counts(counts: &[usize]) -> Arc<DatasetSplit> {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
            .collect();
        let n = labels.len();
        let names = (0..counts.len()).map(|c| c.to_string()).collect();
        Arc::new(
            DatasetSplit::new(Array4::zeros((n, 1, 1, 1)), labels, Split::Train, names).unwrap(),
        )
    }

    #[test]
    fn full_fraction_labels_everything() {
        let v = mask_labels(split_with_counts(&[3, 5, 2]), 1.0, 1).unwrap();
        assert!(v.labeled_mask.iter().all(|&m| m));
    }

    #[test]
    fn balanced_tenth_is_one_per_class() {
        let v = mask_labels(split_with_counts(&[10; 10]), 0.1, 7).unwrap();
        assert_eq!(v.labeled_per_class(), vec![1; 10]);
    }

    #[test]
    fn deterministic_per_seed() {
        let s = split_with_counts(&[40, 25, 35]);
        let a = mask_labels(s.clone(), 0.2, 99).unwrap();
        let b = mask_labels(s.clone(), 0.2, 99).unwrap();
        let c = mask_labels(s, 0.2, 100).unwrap();
        assert_eq!(a.labeled_mask, b.labeled_mask);
        assert_ne!(a.labeled_mask, c.labeled_mask);
    }

    #[test]
    fn starved_class_still_gets_one() {
        let v = mask_labels(split_with_counts(&[100, 3]), 0.1, 0).unwrap();
        assert_eq!(v.labeled_per_class(), vec![10, 1]);
    }

    #[test]
    fn bad_fraction_rejected() {
        for f in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(mask_labels(split_with_counts(&[2, 2]), f, 0).is_err());
        }
    }
}
