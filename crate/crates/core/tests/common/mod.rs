//! Independent oracles shared by the integration tests and the acceptance
//! suite. Nothing here calls the code under test to produce an expected value.

#![allow(dead_code)]

use maven::networks::{
    class_probabilities, Backbone, Discriminator, Encoder, Generator, Network, NetworkConfig,
};
use maven::nn::Grads;
use maven::ImageShape;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    Array2::from_shape_simple_fn((rows, cols), || r.random_range(lo..hi))
}

/// Per-class F1 from an explicitly tabulated `n x n` confusion matrix, written
/// without reference to the library's counting code.
pub fn brute_force_f1(preds: &[usize], labels: &[usize], n: usize) -> Vec<f64> {
    let mut m = vec![vec![0u64; n]; n];
    for (&p, &y) in preds.iter().zip(labels) {
        m[y][p] += 1;
    }
    (0..n)
        .map(|c| {
            let tp = m[c][c] as f64;
            let col: u64 = (0..n).map(|r| m[r][c]).sum();
            let row: u64 = m[c].iter().sum();
            let precision = if col == 0 { 0.0 } else { tp / col as f64 };
            let recall = if row == 0 { 0.0 } else { tp / row as f64 };
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .collect()
}

pub fn brute_force_accuracy(preds: &[usize], labels: &[usize]) -> f64 {
    let hits = preds.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// Frechet distance between Gaussians with diagonal covariances.
pub fn fid_diagonal(mu_a: &[f64], var_a: &[f64], mu_b: &[f64], var_b: &[f64]) -> f64 {
    let mean: f64 = mu_a.iter().zip(mu_b).map(|(a, b)| (a - b).powi(2)).sum();
    let cov: f64 = var_a
        .iter()
        .zip(var_b)
        .map(|(a, b)| a + b - 2.0 * (a * b).sqrt())
        .sum();
    mean + cov
}

/// Relative error with a floor for gradients that are exactly zero.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

pub const FD_STEP: f64 = 1e-6;

/// Worst relative error between `grads` and central differences of `f` over
/// every parameter of `net`.
pub fn fd_params<N: Network>(net: &mut N, grads: &Grads, mut f: impl FnMut(&N) -> f64) -> f64 {
    let shapes: Vec<usize> = net.params_mut().iter().map(|p| p.len()).collect();
    assert_eq!(shapes.len(), grads.0.len(), "gradient tensor count");
    let mut worst: f64 = 0.0;
    for (t, &len) in shapes.iter().enumerate() {
        assert_eq!(len, grads.0[t].len(), "gradient tensor {t} length");
        for i in 0..len {
            let orig = net.params_mut()[t][i];
            net.params_mut()[t][i] = orig + FD_STEP;
            let up = f(net);
            net.params_mut()[t][i] = orig - FD_STEP;
            let down = f(net);
            net.params_mut()[t][i] = orig;
            worst = worst.max(rel_err(grads.0[t][i], (up - down) / (2.0 * FD_STEP)));
        }
    }
    worst
}

/// Worst relative error between `grad` and central differences of `f` in `x`.
pub fn fd_array(
    x: &Array2<f64>,
    grad: &Array2<f64>,
    mut f: impl FnMut(&Array2<f64>) -> f64,
) -> f64 {
    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for idx in 0..x.len() {
        let orig = x.as_slice().unwrap()[idx];
        probe.as_slice_mut().unwrap()[idx] = orig + FD_STEP;
        let up = f(&probe);
        probe.as_slice_mut().unwrap()[idx] = orig - FD_STEP;
        let down = f(&probe);
        probe.as_slice_mut().unwrap()[idx] = orig;
        worst = worst.max(rel_err(
            grad.as_slice().unwrap()[idx],
            (up - down) / (2.0 * FD_STEP),
        ));
    }
    worst
}

/// Softmax written out with scalar exponentials, as an oracle for
/// [`class_probabilities`].
pub fn softmax_row(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn probs(logits: &Array2<f64>) -> Array2<f64> {
    class_probabilities(logits).unwrap()
}

/// A tiny dense model: 2-D inputs, two classes, three latent dimensions.
pub fn tiny_dense() -> NetworkConfig {
    NetworkConfig {
        latent_dim: 3,
        image_shape: ImageShape::new(1, 1, 2),
        n_classes: 2,
        backbone: Backbone::Dense { hidden: vec![6, 5] },
        leaky_relu_alpha: 0.2,
        dropout_rate: 0.25,
    }
}

/// A tiny convolutional model on 16x16 grayscale images.
pub fn tiny_conv() -> NetworkConfig {
    NetworkConfig {
        latent_dim: 1,
        image_shape: ImageShape::new(16, 16, 1),
        n_classes: 2,
        backbone: Backbone::Conv { channels: vec![2] },
        leaky_relu_alpha: 0.2,
        dropout_rate: 0.25,
    }
}

pub struct Nets {
    pub e: Encoder,
    pub g: Generator,
    pub ds: Vec<Discriminator>,
}

pub fn nets(cfg: &NetworkConfig, k: usize, seed: u64) -> Nets {
    let mut r = rng(seed);
    let e = Encoder::new(cfg, &mut r).unwrap();
    let g = Generator::new(cfg, &mut r).unwrap();
    let ds = (0..k)
        .map(|_| Discriminator::new(cfg, &mut r).unwrap())
        .collect();
    Nets { e, g, ds }
}

/// Bitwise snapshot of a network's parameters and buffers.
pub fn snapshot<N: Network>(net: &N) -> Vec<u64> {
    net.params()
        .iter()
        .chain(net.buffers().iter())
        .flat_map(|t| t.data.iter().map(|v| v.to_bits()))
        .collect()
}
