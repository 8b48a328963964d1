//! Training objectives for the discriminator, generator and encoder.
//!
//! Every loss is "lower is better", reduced by the batch mean, and takes
//! logarithms of probabilities floored at [`PROB_FLOOR`]. Functions named
//! `*_with_grad` also return the gradient with respect to their input; use
//! [`softmax_backward`] to carry a probability gradient to the logits.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::networks::EncoderOutput;

pub const PROB_FLOOR: f64 = 1e-12;

/// A scalar loss and its gradient with respect to the input it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad<G> {
    pub value: f64,
    pub grad: G,
}

/// `-ln(max(p, floor))` and its derivative (zero where the floor is active).
#[inline]
fn neg_log(p: f64) -> (f64, f64) {
    if p > PROB_FLOOR {
        (-p.ln(), -1.0 / p)
    } else {
        (-PROB_FLOOR.ln(), 0.0)
    }
}

fn check_probs(probs: &Array2<f64>, what: &str) -> Result<usize> {
    if probs.ncols() < 2 {
        return Err(Error::InvalidArgument(format!(
            "{what}: need n + 1 >= 2 probability columns"
        )));
    }
    if !probs.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(what.to_string()));
    }
    Ok(probs.ncols() - 1)
}

fn batch_len(n: usize, what: &str) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidArgument(format!("{what}: empty batch")));
    }
    Ok(n as f64)
}

/// Supervised cross-entropy over the real classes; `labels` are in `0..n`.
pub fn d_supervised_loss_with_grad(
    probs: &Array2<f64>,
    labels: &[usize],
) -> Result<LossGrad<Array2<f64>>> {
    let n = check_probs(probs, "d_supervised")?;
    if labels.len() != probs.nrows() {
        return Err(Error::shape(
            "d_supervised labels",
            probs.nrows(),
            labels.len(),
        ));
    }
    let b = batch_len(labels.len(), "d_supervised")?;
    let mut grad = Array2::zeros(probs.raw_dim());
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= n {
            return Err(Error::InvalidArgument(format!(
                "labeled item {i} has label {y}, which is the fake class or beyond (n = {n})"
            )));
        }
        let (v, d) = neg_log(probs[[i, y]]);
        total += v;
        grad[[i, y]] = d / b;
    }
    Ok(LossGrad {
        value: total / b,
        grad,
    })
}

pub fn d_supervised_loss(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    d_supervised_loss_with_grad(probs, labels).map(|l| l.value)
}

/// `-E ln(1 - p(fake | x))` on real data. The real mass is summed over the
/// class columns rather than formed as `1 - p(fake)`.
pub fn d_real_loss_with_grad(probs: &Array2<f64>) -> Result<LossGrad<Array2<f64>>> {
    let n = check_probs(probs, "d_real")?;
    let b = batch_len(probs.nrows(), "d_real")?;
    let mut grad = Array2::zeros(probs.raw_dim());
    let mut total = 0.0;
    for (i, row) in probs.rows().into_iter().enumerate() {
        let real: f64 = row.iter().take(n).sum();
        let (v, d) = neg_log(real);
        total += v;
        grad.row_mut(i).iter_mut().take(n).for_each(|g| *g = d / b);
    }
    Ok(LossGrad {
        value: total / b,
        grad,
    })
}

pub fn d_real_loss(probs: &Array2<f64>) -> Result<f64> {
    d_real_loss_with_grad(probs).map(|l| l.value)
}

/// `-E ln p(fake | x)` on generated data (fake1 and fake2 share the form).
pub fn d_fake_loss_with_grad(probs: &Array2<f64>) -> Result<LossGrad<Array2<f64>>> {
    let n = check_probs(probs, "d_fake")?;
    let b = batch_len(probs.nrows(), "d_fake")?;
    let mut grad = Array2::zeros(probs.raw_dim());
    let mut total = 0.0;
    for i in 0..probs.nrows() {
        let (v, d) = neg_log(probs[[i, n]]);
        total += v;
        grad[[i, n]] = d / b;
    }
    Ok(LossGrad {
        value: total / b,
        grad,
    })
}

pub fn d_fake_loss(probs: &Array2<f64>) -> Result<f64> {
    d_fake_loss_with_grad(probs).map(|l| l.value)
}

pub fn d_unsupervised_loss(real: f64, fake1: f64, fake2: f64) -> f64 {
    real + fake1 + fake2
}

/// `-E ln(1 - D(x))` for per-item fake probabilities `D(x)`, which may come
/// from a single discriminator or from the ensemble aggregate. The gradient
/// is with respect to those probabilities.
pub fn g_adversarial_loss_with_grad(p_fake: ArrayView1<'_, f64>) -> Result<LossGrad<Array1<f64>>> {
    if !p_fake.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("g_adversarial".into()));
    }
    let b = batch_len(p_fake.len(), "g_adversarial")?;
    let mut total = 0.0;
    let grad = p_fake.mapv(|p| {
        let (v, d) = neg_log(1.0 - p);
        total += v;
        -d / b
    });
    Ok(LossGrad {
        value: total / b,
        grad,
    })
}

pub fn g_adversarial_loss(p_fake: ArrayView1<'_, f64>) -> Result<f64> {
    g_adversarial_loss_with_grad(p_fake).map(|l| l.value)
}

/// Gradients of the feature-matching loss with respect to both batches.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrads {
    pub real: Array2<f64>,
    pub fake: Array2<f64>,
}

/// Squared L2 distance between the batch-mean feature vectors.
pub fn feature_matching_loss_with_grad(
    f_real: &Array2<f64>,
    f_fake: &Array2<f64>,
) -> Result<LossGrad<FeatureGrads>> {
    if f_real.ncols() != f_fake.ncols() {
        return Err(Error::shape(
            "feature_matching feature_dim",
            f_real.ncols(),
            f_fake.ncols(),
        ));
    }
    let br = batch_len(f_real.nrows(), "feature_matching real")?;
    let bf = batch_len(f_fake.nrows(), "feature_matching fake")?;
    let diff = f_real.sum_axis(Axis(0)) / br - f_fake.sum_axis(Axis(0)) / bf;
    let value = diff.dot(&diff);
    if !value.is_finite() {
        return Err(Error::NonFinite("feature_matching".into()));
    }
    let row_r = &diff * (2.0 / br);
    let row_f = &diff * (-2.0 / bf);
    let real = Array2::from_shape_fn(f_real.raw_dim(), |(_, j)| row_r[j]);
    let fake = Array2::from_shape_fn(f_fake.raw_dim(), |(_, j)| row_f[j]);
    Ok(LossGrad {
        value,
        grad: FeatureGrads { real, fake },
    })
}

pub fn feature_matching_loss(f_real: &Array2<f64>, f_fake: &Array2<f64>) -> Result<f64> {
    feature_matching_loss_with_grad(f_real, f_fake).map(|l| l.value)
}

pub fn g_total_loss(feature: f64, fake1: f64, fake2: f64) -> f64 {
    feature + fake1 + fake2
}

/// Gradient of the KL term with respect to the encoder outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct KlGrads {
    pub mu: Array2<f64>,
    pub log_sigma_sq: Array2<f64>,
}

/// Closed-form `KL[N(mu, sigma^2) || N(0, I)]`, summed over latent
/// dimensions and averaged over items.
pub fn kl_loss_with_grad(enc: &EncoderOutput) -> Result<LossGrad<KlGrads>> {
    if enc.mu.shape() != enc.log_sigma_sq.shape() {
        return Err(Error::shape(
            "kl_loss",
            format!("{:?}", enc.mu.shape()),
            format!("{:?}", enc.log_sigma_sq.shape()),
        ));
    }
    if !enc
        .mu
        .iter()
        .chain(enc.log_sigma_sq.iter())
        .all(|v| v.is_finite())
    {
        return Err(Error::NonFinite("kl_loss input".into()));
    }
    let b = batch_len(enc.mu.nrows(), "kl_loss")?;
    let mut total = 0.0;
    for (m, lv) in enc.mu.iter().zip(enc.log_sigma_sq.iter()) {
        total += 0.5 * (m * m + lv.exp() - 1.0 - lv);
    }
    let value = total / b;
    if !value.is_finite() {
        return Err(Error::NonFinite("kl_loss".into()));
    }
    Ok(LossGrad {
        value,
        grad: KlGrads {
            mu: &enc.mu / b,
            log_sigma_sq: enc.log_sigma_sq.mapv(|lv| 0.5 * (lv.exp() - 1.0) / b),
        },
    })
}

pub fn kl_loss(enc: &EncoderOutput) -> Result<f64> {
    kl_loss_with_grad(enc).map(|l| l.value)
}

pub fn e_total_loss(kl: f64, feature: f64) -> f64 {
    kl + feature
}

/// Carries a gradient w.r.t. softmax probabilities back to the logits:
/// `dl_j = p_j (dp_j - sum_k p_k dp_k)`.
pub fn softmax_backward(probs: &Array2<f64>, d_probs: &Array2<f64>) -> Array2<f64> {
    let mut out = probs * d_probs;
    for (mut row, p) in out.rows_mut().into_iter().zip(probs.rows()) {
        let dot: f64 = row.sum();
        row.zip_mut_with(&p, |o, &pj| *o -= pj * dot);
    }
    out
}

/// Per-step loss components and totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub d_supervised: f64,
    pub d_real: f64,
    pub d_fake1: f64,
    pub d_fake2: f64,
    pub g_feature: f64,
    pub g_fake1: f64,
    pub g_fake2: f64,
    pub e_kl: f64,
    pub e_feature: f64,
    pub loss_d: f64,
    pub loss_g: f64,
    pub loss_e: f64,
}

impl LossBreakdown {
    pub const CSV_COLUMNS: [&'static str; 12] = [
        "d_supervised",
        "d_real",
        "d_fake1",
        "d_fake2",
        "g_feature",
        "g_fake1",
        "g_fake2",
        "e_kl",
        "e_feature",
        "loss_d",
        "loss_g",
        "loss_e",
    ];

    pub fn values(&self) -> [f64; 12] {
        [
            self.d_supervised,
            self.d_real,
            self.d_fake1,
            self.d_fake2,
            self.g_feature,
            self.g_fake1,
            self.g_fake2,
            self.e_kl,
            self.e_feature,
            self.loss_d,
            self.loss_g,
            self.loss_e,
        ]
    }

    /// Recomputes the three totals from their components.
    pub fn with_totals(mut self) -> Self {
        self.loss_d =
            self.d_supervised + d_unsupervised_loss(self.d_real, self.d_fake1, self.d_fake2);
        self.loss_g = g_total_loss(self.g_feature, self.g_fake1, self.g_fake2);
        self.loss_e = e_total_loss(self.e_kl, self.e_feature);
        self
    }

    /// Fails with the name of the first non-finite component.
    pub fn check_finite(&self) -> Result<()> {
        match Self::CSV_COLUMNS
            .iter()
            .zip(self.values())
            .find(|(_, v)| !v.is_finite())
        {
            Some((name, v)) => Err(Error::NonFinite(format!("loss component {name} = {v}"))),
            None => Ok(()),
        }
    }
}
