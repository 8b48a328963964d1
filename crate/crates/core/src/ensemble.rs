//! Aggregation of K discriminators' per-item fake probabilities into one
//! feedback signal for the generator and encoder.

use ndarray::Array1;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleMode {
    /// Weighted mean `(1/K) sum w_k D_k`.
    Mean,
    /// One discriminator drawn uniformly per training step.
    Random,
}

impl std::str::FromStr for EnsembleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "random" | "rand" => Ok(Self::Random),
            other => Err(Error::Config(format!(
                "unknown ensemble mode {other:?} (expected mean or random)"
            ))),
        }
    }
}

impl std::fmt::Display for EnsembleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Mean => "mean",
            Self::Random => "rand",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub k: usize,
    pub weights: Vec<f64>,
    pub mode: EnsembleMode,
}

impl EnsembleConfig {
    /// `k` discriminators with unit weights.
    pub fn uniform(k: usize, mode: EnsembleMode) -> Self {
        Self {
            k,
            weights: vec![1.0; k],
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_weights(self.k, &self.weights)
    }

    /// Per-discriminator gradient coefficients: `w_k / K` in mean mode, an
    /// indicator of the selected discriminator in random mode.
    pub fn coefficients(&self, selected: Option<usize>) -> Vec<f64> {
        match (self.mode, selected) {
            (EnsembleMode::Random, Some(s)) => (0..self.k)
                .map(|k| if k == s { 1.0 } else { 0.0 })
                .collect(),
            _ => self.weights.iter().map(|w| w / self.k as f64).collect(),
        }
    }
}

fn validate_weights(k: usize, weights: &[f64]) -> Result<()> {
    if k == 0 {
        return Err(Error::Config(
            "ensemble needs at least one discriminator".into(),
        ));
    }
    if weights.len() != k {
        return Err(Error::Config(format!(
            "ensemble has {k} discriminators but {} weights",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::Config(
            "ensemble weights must be finite and non-negative".into(),
        ));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::Config(
            "at least one ensemble weight must be positive".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeedbackSource {
    Mean,
    /// Zero-based index of the selected discriminator.
    Index(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleFeedback {
    pub value: Array1<f64>,
    pub source: FeedbackSource,
}

/// `(1/K) sum_k w_k outputs_k`, elementwise.
pub fn aggregate_mean(outputs: &[Array1<f64>], weights: &[f64]) -> Result<EnsembleFeedback> {
    validate_weights(outputs.len(), weights)?;
    let len = outputs[0].len();
    if let Some(bad) = outputs.iter().find(|o| o.len() != len) {
        return Err(Error::shape("aggregate_mean outputs", len, bad.len()));
    }
    let k = outputs.len() as f64;
    // Terms are summed in sorted order so that any joint permutation of
    // (outputs, weights) gives a bitwise-identical result.
    let mut terms = vec![0.0; outputs.len()];
    let value = Array1::from_shape_fn(len, |i| {
        for (t, (o, &w)) in terms.iter_mut().zip(outputs.iter().zip(weights)) {
            *t = w / k * o[i];
        }
        terms.sort_by(f64::total_cmp);
        terms.iter().sum()
    });
    Ok(EnsembleFeedback {
        value,
        source: FeedbackSource::Mean,
    })
}

/// Returns one discriminator's output, chosen uniformly.
pub fn select_random<R: Rng + ?Sized>(
    outputs: &[Array1<f64>],
    rng: &mut R,
) -> Result<EnsembleFeedback> {
    if outputs.is_empty() {
        return Err(Error::InvalidArgument(
            "select_random needs at least one output".into(),
        ));
    }
    let k = rng.random_range(0..outputs.len());
    Ok(EnsembleFeedback {
        value: outputs[k].clone(),
        source: FeedbackSource::Index(k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mean_examples() {
        let outs = [array![0.2], array![0.4], array![0.6]];
        let f = aggregate_mean(&outs, &[1.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(f.value[0], 0.4, epsilon = 1e-15);
        assert_eq!(f.source, FeedbackSource::Mean);

        let single = [array![0.3, -1.5, 7.0]];
        assert_eq!(aggregate_mean(&single, &[1.0]).unwrap().value, single[0]);

        let (a, b) = (0.37, 0.91);
        let f = aggregate_mean(&[array![a], array![b]], &[2.0, 0.0]).unwrap();
        assert_eq!(f.value[0], a);
    }

    #[test]
    fn mean_errors() {
        assert!(aggregate_mean(&[array![0.1], array![0.2]], &[1.0]).is_err());
        assert!(aggregate_mean(&[array![0.1], array![0.2]], &[0.0, 0.0]).is_err());
        assert!(aggregate_mean(&[array![0.1], array![0.2, 0.3]], &[1.0, 1.0]).is_err());
        assert!(aggregate_mean(&[], &[]).is_err());
    }

    #[test]
    fn random_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            assert_eq!(
                select_random(&[array![0.5]], &mut rng).unwrap().source,
                FeedbackSource::Index(0)
            );
        }
        assert!(select_random(&[], &mut rng).is_err());

        let outs = [array![1.0], array![2.0], array![3.0]];
        let draws = 30_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            let f = select_random(&outs, &mut rng).unwrap();
            let FeedbackSource::Index(k) = f.source else {
                unreachable!()
            };
            assert_eq!(f.value, outs[k]);
            counts[k] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((0.323..=0.344).contains(&freq), "frequency {freq}");
        }

        let seq = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| select_random(&outs, &mut r).unwrap().source)
                .collect::<Vec<_>>()
        };
        assert_eq!(seq(9), seq(9));
    }

    #[test]
    fn coefficients_follow_mode() {
        let mean = EnsembleConfig {
            k: 2,
            weights: vec![2.0, 0.0],
            mode: EnsembleMode::Mean,
        };
        assert_eq!(mean.coefficients(None), vec![1.0, 0.0]);
        let rand = EnsembleConfig::uniform(3, EnsembleMode::Random);
        assert_eq!(rand.coefficients(Some(1)), vec![0.0, 1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn mean_is_linear(
            a in prop::collection::vec(-10.0f64..10.0, 4),
            b in prop::collection::vec(-10.0f64..10.0, 4),
            w in prop::collection::vec(0.1f64..3.0, 4),
            alpha in -5.0f64..5.0,
            beta in -5.0f64..5.0,
        ) {
            let outs = |v: &[f64]| v.iter().map(|&x| array![x]).collect::<Vec<_>>();
            let combo: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + beta * y).collect();
            let lhs = aggregate_mean(&outs(&combo), &w).unwrap().value[0];
            let rhs = alpha * aggregate_mean(&outs(&a), &w).unwrap().value[0]
                + beta * aggregate_mean(&outs(&b), &w).unwrap().value[0];
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }

        #[test]
        fn joint_permutation_is_exactly_invariant(
            vals in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 3), 5),
            w in prop::collection::vec(0.0f64..2.0, 5),
            perm in Just((0..5).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            prop_assume!(w.iter().any(|&x| x > 0.0));
            let outs: Vec<_> = vals.iter().map(|v| Array1::from(v.clone())).collect();
            let p_outs: Vec<_> = perm.iter().map(|&i| outs[i].clone()).collect();
            let p_w: Vec<_> = perm.iter().map(|&i| w[i]).collect();
            let a = aggregate_mean(&outs, &w).unwrap().value;
            let b = aggregate_mean(&p_outs, &p_w).unwrap().value;
            prop_assert_eq!(a, b);
        }
    }
}
