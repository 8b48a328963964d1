use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One-vs-rest counts per class (zero-based class indices).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
    pub n_classes: usize,
    pub total: usize,
}

impl ConfusionCounts {
    pub fn tn(&self, class: usize) -> usize {
        self.total - self.tp[class] - self.fp[class] - self.fn_[class]
    }
}

fn check_pairs(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<()> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(
            "classification inputs",
            labels.len(),
            predictions.len(),
        ));
    }
    if let Some(bad) = predictions.iter().chain(labels).find(|&&c| c >= n_classes) {
        return Err(Error::InvalidArgument(format!(
            "class {bad} out of range for {n_classes} classes"
        )));
    }
    Ok(())
}

pub fn confusion_counts(
    predictions: &[usize],
    labels: &[usize],
    n_classes: usize,
) -> Result<ConfusionCounts> {
    check_pairs(predictions, labels, n_classes)?;
    let mut c = ConfusionCounts {
        tp: vec![0; n_classes],
        fp: vec![0; n_classes],
        fn_: vec![0; n_classes],
        n_classes,
        total: labels.len(),
    };
    for (&p, &y) in predictions.iter().zip(labels) {
        if p == y {
            c.tp[p] += 1;
        } else {
            c.fp[p] += 1;
            c.fn_[y] += 1;
        }
    }
    Ok(c)
}

/// `matrix[label][prediction]` counts.
pub fn confusion_matrix(
    predictions: &[usize],
    labels: &[usize],
    n_classes: usize,
) -> Result<Vec<Vec<usize>>> {
    check_pairs(predictions, labels, n_classes)?;
    let mut m = vec![vec![0; n_classes]; n_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        m[y][p] += 1;
    }
    Ok(m)
}

/// F1 from raw counts; 0 whenever precision or recall is undefined or both are 0.
pub fn f1_score(tp: usize, fp: usize, fn_: usize) -> f64 {
    if tp + fp == 0 || tp + fn_ == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / (tp + fn_) as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn f1_per_class(counts: &ConfusionCounts) -> Vec<f64> {
    (0..counts.n_classes)
        .map(|c| f1_score(counts.tp[c], counts.fp[c], counts.fn_[c]))
        .collect()
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(
            "accuracy inputs",
            labels.len(),
            predictions.len(),
        ));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("accuracy of no items".into()));
    }
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_example() {
        let c = confusion_counts(&[0, 0, 1], &[0, 1, 1], 2).unwrap();
        assert_eq!(
            (c.tp.clone(), c.fp.clone(), c.fn_.clone()),
            (vec![1, 1], vec![1, 0], vec![0, 1])
        );
        assert_eq!(c.tn(0), 1);
        assert!((accuracy(&[0, 0, 1], &[0, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_and_empty() {
        let c = confusion_counts(&[2, 0, 1], &[2, 0, 1], 3).unwrap();
        assert!(c.fp.iter().chain(&c.fn_).all(|&v| v == 0));
        assert_eq!(accuracy(&[2, 0, 1], &[2, 0, 1]).unwrap(), 1.0);
        let e = confusion_counts(&[], &[], 3).unwrap();
        assert!(e.tp.iter().chain(&e.fp).chain(&e.fn_).all(|&v| v == 0));
        assert!(accuracy(&[], &[]).is_err());
        assert!(confusion_counts(&[3], &[0], 3).is_err());
    }

    #[test]
    fn f1_values() {
        assert!((f1_score(8, 2, 4) - 0.7273).abs() < 1e-4);
        assert_eq!(f1_score(1, 1, 1), 0.5);
        assert_eq!(f1_score(0, 0, 5), 0.0);
        assert_eq!(f1_score(0, 3, 0), 0.0);
    }
}
