//! The encoder, generator and (n+1)-class discriminator, plus latent sampling
//! and the softmax readout of the discriminator head.
//!
//! All networks are pure functions of `(input, parameters, mode, rng)`:
//! dropout masks and reparameterization noise come from the caller's rng.

use ndarray::{s, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::batch::{ImageBatch, ImageShape};
use crate::error::{Error, Result};
use crate::nn::{
    BatchNorm, Conv2d, ConvGeometry, ConvTranspose2d, Dense, Grads, Init, Layer, Mode, Need,
    Sequential, TensorRef, Trace,
};

const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PAD: usize = 1;
const CONV_INIT: Init = Init::Normal(0.02);

/// Layer stack used by all three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backbone {
    /// Stride-2 4x4 convolutions; one entry per block, channels widen with depth.
    Conv { channels: Vec<usize> },
    /// Fully connected blocks, used for low-dimensional "1x1 image" data.
    Dense { hidden: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub latent_dim: usize,
    pub image_shape: ImageShape,
    pub n_classes: usize,
    pub backbone: Backbone,
    pub leaky_relu_alpha: f64,
    pub dropout_rate: f64,
}

impl NetworkConfig {
    /// Convolutional defaults for an image shape.
    pub fn conv(image_shape: ImageShape, n_classes: usize) -> Self {
        Self {
            latent_dim: 100,
            image_shape,
            n_classes,
            backbone: Backbone::Conv {
                channels: vec![32, 64],
            },
            leaky_relu_alpha: 0.2,
            dropout_rate: 0.4,
        }
    }

    /// Fully connected defaults for low-dimensional data.
    pub fn dense(image_shape: ImageShape, n_classes: usize) -> Self {
        Self {
            latent_dim: 100,
            image_shape,
            n_classes,
            backbone: Backbone::Dense {
                hidden: vec![128, 128],
            },
            leaky_relu_alpha: 0.2,
            dropout_rate: 0.4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ImageShape {
            height,
            width,
            channels,
        } = self.image_shape;
        if self.latent_dim == 0 {
            return Err(Error::Config("latent_dim must be positive".into()));
        }
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Config(format!(
                "image shape {} has a zero extent",
                self.image_shape
            )));
        }
        if self.n_classes < 2 {
            return Err(Error::Config(format!(
                "n_classes must be >= 2, got {}",
                self.n_classes
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if !self.leaky_relu_alpha.is_finite() {
            return Err(Error::Config("leaky_relu_alpha must be finite".into()));
        }
        match &self.backbone {
            Backbone::Conv { channels: widths } => {
                for (name, v) in [("height", height), ("width", width)] {
                    if v < 16 || !v.is_power_of_two() {
                        return Err(Error::Config(format!(
                            "image {name} {v} must be a power of two >= 16 for a convolutional backbone"
                        )));
                    }
                }
                if widths.is_empty() || widths.contains(&0) {
                    return Err(Error::Config(
                        "conv channel widths must be a non-empty list of positive integers".into(),
                    ));
                }
                let shrink = 1usize << widths.len();
                if height < shrink * 2 || width < shrink * 2 {
                    return Err(Error::Config(format!(
                        "{} stride-2 blocks leave less than a 2x2 grid of a {}x{} image",
                        widths.len(),
                        height,
                        width
                    )));
                }
            }
            Backbone::Dense { hidden } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::Config(
                        "dense hidden widths must be a non-empty list of positive integers".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Dimensionality of the discriminator feature tap.
    pub fn feature_dim(&self) -> usize {
        match &self.backbone {
            Backbone::Conv { channels } => {
                let shrink = 1 << channels.len();
                (self.image_shape.height / shrink)
                    * (self.image_shape.width / shrink)
                    * channels[channels.len() - 1]
            }
            Backbone::Dense { hidden } => hidden[hidden.len() - 1],
        }
    }
}

/// Posterior parameters of `q(z|x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput {
    pub mu: Array2<f64>,
    pub log_sigma_sq: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub z: Array2<f64>,
}

impl LatentCode {
    /// Draws `batch` codes from the standard normal prior.
    pub fn sample<R: Rng + ?Sized>(batch: usize, latent_dim: usize, rng: &mut R) -> Self {
        Self {
            z: standard_normal((batch, latent_dim), rng),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.z.ncols()
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn(shape, || rng.sample(StandardNormal))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorOutput {
    /// `(batch, n + 1)`; the last column is the fake class.
    pub logits: Array2<f64>,
    /// Flattened activation of the last feature block.
    pub features: Array2<f64>,
}

/// Shared parameter plumbing for networks built from [`Sequential`] parts.
pub trait Network {
    fn parts(&self) -> Vec<(&'static str, &Sequential)>;
    fn parts_mut(&mut self) -> Vec<&mut Sequential>;

    fn params(&self) -> Vec<TensorRef<'_>> {
        self.parts()
            .into_iter()
            .flat_map(|(prefix, s)| {
                s.params().into_iter().map(move |mut t| {
                    t.name = format!("{prefix}.{}", t.name);
                    t
                })
            })
            .collect()
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.parts_mut()
            .into_iter()
            .flat_map(|s| s.params_mut())
            .collect()
    }

    fn buffers(&self) -> Vec<TensorRef<'_>> {
        self.parts()
            .into_iter()
            .flat_map(|(prefix, s)| {
                s.buffers().into_iter().map(move |mut t| {
                    t.name = format!("{prefix}.{}", t.name);
                    t
                })
            })
            .collect()
    }

    fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        self.parts_mut()
            .into_iter()
            .flat_map(|s| s.buffers_mut())
            .collect()
    }

    fn num_params(&self) -> usize {
        self.params().iter().map(|t| t.data.len()).sum()
    }

    /// All parameters concatenated in declaration order.
    fn param_vector(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }
}

fn check_images(x: &ImageBatch, expected: ImageShape, context: &'static str) -> Result<()> {
    if x.shape() != expected {
        return Err(Error::shape(context, expected, x.shape()));
    }
    Ok(())
}

fn check_finite(a: &Array2<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// `E`: images to posterior parameters `(mu, log sigma^2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    net: Sequential,
    image_shape: ImageShape,
    latent_dim: usize,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let alpha = cfg.leaky_relu_alpha;
        let mut layers = Vec::new();
        let feat = match &cfg.backbone {
            Backbone::Conv { channels } => {
                let (mut h, mut w, mut c) = (
                    cfg.image_shape.height,
                    cfg.image_shape.width,
                    cfg.image_shape.channels,
                );
                for &out in channels {
                    let g = ConvGeometry::new(h, w, c, KERNEL, STRIDE, PAD)?;
                    layers.push(Layer::Conv(Conv2d::new(g, out, CONV_INIT, rng)));
                    layers.push(Layer::BatchNorm(BatchNorm::new(out)));
                    layers.push(Layer::LeakyRelu(alpha));
                    (h, w, c) = (g.out_h, g.out_w, out);
                }
                h * w * c
            }
            Backbone::Dense { hidden } => {
                let mut prev = cfg.image_shape.len();
                for &width in hidden {
                    layers.push(Layer::Dense(Dense::new(prev, width, Init::Glorot, rng)));
                    layers.push(Layer::BatchNorm(BatchNorm::new(width)));
                    layers.push(Layer::LeakyRelu(alpha));
                    prev = width;
                }
                prev
            }
        };
        layers.push(Layer::Dense(Dense::new(
            feat,
            2 * cfg.latent_dim,
            Init::Glorot,
            rng,
        )));
        Ok(Self {
            net: Sequential::new(layers),
            image_shape: cfg.image_shape,
            latent_dim: cfg.latent_dim,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    /// Zeroes the final affine layer so that `mu = 0` and `log sigma^2 = 0`.
    pub fn zero_head(&mut self) {
        self.net.zero_last_affine();
    }

    pub fn encode<R: Rng + ?Sized>(
        &self,
        x: &ImageBatch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<EncoderOutput> {
        check_images(x, self.image_shape, "encode")?;
        let trace = self.forward(&x.to_flat(), mode, rng);
        let out = self.split(&trace);
        check_finite(&out.mu, "encoder mu")?;
        check_finite(&out.log_sigma_sq, "encoder log_sigma_sq")?;
        Ok(out)
    }

    pub(crate) fn forward<R: Rng + ?Sized>(
        &self,
        x: &Array2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Trace {
        self.net.forward(x, mode, rng)
    }

    pub(crate) fn split(&self, trace: &Trace) -> EncoderOutput {
        let d = self.latent_dim;
        EncoderOutput {
            mu: trace.output.slice(s![.., ..d]).to_owned(),
            log_sigma_sq: trace.output.slice(s![.., d..]).to_owned(),
        }
    }

    pub(crate) fn backward(
        &self,
        trace: &Trace,
        d_mu: &Array2<f64>,
        d_log_sigma_sq: &Array2<f64>,
    ) -> Grads {
        let dy = ndarray::concatenate(Axis(1), &[d_mu.view(), d_log_sigma_sq.view()])
            .expect("matching rows");
        self.net
            .backward(
                trace,
                dy,
                Need {
                    input: false,
                    params: true,
                },
            )
            .1
            .expect("params requested")
    }

    pub(crate) fn commit(&mut self, trace: &Trace) {
        self.net.commit(trace);
    }
}

impl Network for Encoder {
    fn parts(&self) -> Vec<(&'static str, &Sequential)> {
        vec![("encoder", &self.net)]
    }
    fn parts_mut(&mut self) -> Vec<&mut Sequential> {
        vec![&mut self.net]
    }
}

/// `z = mu + exp(log sigma^2 / 2) * epsilon`, elementwise.
pub fn reparameterize(enc: &EncoderOutput, epsilon: &Array2<f64>) -> Result<LatentCode> {
    if enc.mu.shape() != enc.log_sigma_sq.shape() {
        return Err(Error::shape(
            "reparameterize log_sigma_sq",
            format!("{:?}", enc.mu.shape()),
            format!("{:?}", enc.log_sigma_sq.shape()),
        ));
    }
    if epsilon.shape() != enc.mu.shape() {
        return Err(Error::shape(
            "reparameterize epsilon",
            format!("{:?}", enc.mu.shape()),
            format!("{:?}", epsilon.shape()),
        ));
    }
    let mut z = enc.log_sigma_sq.mapv(|lv| (0.5 * lv).exp());
    z.zip_mut_with(epsilon, |s, e| *s *= e);
    z += &enc.mu;
    Ok(LatentCode { z })
}

/// `G`: latent codes to images in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    net: Sequential,
    image_shape: ImageShape,
    latent_dim: usize,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let alpha = cfg.leaky_relu_alpha;
        let shape = cfg.image_shape;
        let mut layers = Vec::new();
        match &cfg.backbone {
            Backbone::Conv { channels } => {
                let shrink = 1 << channels.len();
                let (mut h, mut w) = (shape.height / shrink, shape.width / shrink);
                let mut c = channels[channels.len() - 1];
                layers.push(Layer::Dense(Dense::new(
                    cfg.latent_dim,
                    h * w * c,
                    Init::Glorot,
                    rng,
                )));
                layers.push(Layer::BatchNorm(BatchNorm::new(c)));
                layers.push(Layer::LeakyRelu(alpha));
                for i in (0..channels.len()).rev() {
                    let out = if i == 0 {
                        shape.channels
                    } else {
                        channels[i - 1]
                    };
                    let g = ConvGeometry::new(2 * h, 2 * w, out, KERNEL, STRIDE, PAD)?;
                    layers.push(Layer::ConvTranspose(ConvTranspose2d::new(
                        g, c, CONV_INIT, rng,
                    )));
                    if i > 0 {
                        layers.push(Layer::BatchNorm(BatchNorm::new(out)));
                        layers.push(Layer::LeakyRelu(alpha));
                    }
                    (h, w, c) = (2 * h, 2 * w, out);
                }
            }
            Backbone::Dense { hidden } => {
                let mut prev = cfg.latent_dim;
                for &width in hidden.iter().rev() {
                    layers.push(Layer::Dense(Dense::new(prev, width, Init::Glorot, rng)));
                    layers.push(Layer::BatchNorm(BatchNorm::new(width)));
                    layers.push(Layer::LeakyRelu(alpha));
                    prev = width;
                }
                layers.push(Layer::Dense(Dense::new(
                    prev,
                    shape.len(),
                    Init::Glorot,
                    rng,
                )));
            }
        }
        layers.push(Layer::Tanh);
        Ok(Self {
            net: Sequential::new(layers),
            image_shape: shape,
            latent_dim: cfg.latent_dim,
        })
    }

    pub fn image_shape(&self) -> ImageShape {
        self.image_shape
    }

    pub fn generate<R: Rng + ?Sized>(
        &self,
        z: &LatentCode,
        mode: Mode,
        rng: &mut R,
    ) -> Result<ImageBatch> {
        if z.latent_dim() != self.latent_dim {
            return Err(Error::shape(
                "generate latent_dim",
                self.latent_dim,
                z.latent_dim(),
            ));
        }
        let trace = self.forward(&z.z, mode, rng);
        ImageBatch::from_flat(trace.output, self.image_shape)
    }

    pub(crate) fn forward<R: Rng + ?Sized>(
        &self,
        z: &Array2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> Trace {
        self.net.forward(z, mode, rng)
    }

    /// Returns the gradient w.r.t. `z` and, if requested, the parameters.
    pub(crate) fn backward(
        &self,
        trace: &Trace,
        d_images: Array2<f64>,
        params: bool,
    ) -> (Array2<f64>, Option<Grads>) {
        let (dz, g) = self.net.backward(
            trace,
            d_images,
            Need {
                input: true,
                params,
            },
        );
        (dz.expect("input requested"), g)
    }

    pub(crate) fn commit(&mut self, trace: &Trace) {
        self.net.commit(trace);
    }
}

impl Network for Generator {
    fn parts(&self) -> Vec<(&'static str, &Sequential)> {
        vec![("generator", &self.net)]
    }
    fn parts_mut(&mut self) -> Vec<&mut Sequential> {
        vec![&mut self.net]
    }
}

/// `D`: images to `(n + 1)` logits and the feature tap `f(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    body: Sequential,
    head: Sequential,
    image_shape: ImageShape,
    n_classes: usize,
}

/// Forward record of a discriminator pass.
#[derive(Debug, Clone)]
pub struct DiscriminatorTrace {
    body: Trace,
    head: Trace,
}

impl DiscriminatorTrace {
    pub fn logits(&self) -> &Array2<f64> {
        &self.head.output
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.body.output
    }
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(cfg: &NetworkConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let alpha = cfg.leaky_relu_alpha;
        let mut body = Vec::new();
        let blocks = match &cfg.backbone {
            Backbone::Conv { channels } => channels.len(),
            Backbone::Dense { hidden } => hidden.len(),
        };
        match &cfg.backbone {
            Backbone::Conv { channels } => {
                let (mut h, mut w, mut c) = (
                    cfg.image_shape.height,
                    cfg.image_shape.width,
                    cfg.image_shape.channels,
                );
                for (i, &out) in channels.iter().enumerate() {
                    let g = ConvGeometry::new(h, w, c, KERNEL, STRIDE, PAD)?;
                    body.push(Layer::Conv(Conv2d::new(g, out, CONV_INIT, rng)));
                    if i > 0 {
                        body.push(Layer::BatchNorm(BatchNorm::new(out)));
                    }
                    body.push(Layer::LeakyRelu(alpha));
                    if i + 1 < blocks {
                        body.push(Layer::Dropout(cfg.dropout_rate));
                    }
                    (h, w, c) = (g.out_h, g.out_w, out);
                }
            }
            Backbone::Dense { hidden } => {
                let mut prev = cfg.image_shape.len();
                for (i, &width) in hidden.iter().enumerate() {
                    body.push(Layer::Dense(Dense::new(prev, width, Init::Glorot, rng)));
                    if i > 0 {
                        body.push(Layer::BatchNorm(BatchNorm::new(width)));
                    }
                    body.push(Layer::LeakyRelu(alpha));
                    if i + 1 < blocks {
                        body.push(Layer::Dropout(cfg.dropout_rate));
                    }
                    prev = width;
                }
            }
        }
        let head = vec![
            Layer::Dropout(cfg.dropout_rate),
            Layer::Dense(Dense::new(
                cfg.feature_dim(),
                cfg.n_classes + 1,
                Init::Glorot,
                rng,
            )),
        ];
        Ok(Self {
            body: Sequential::new(body),
            head: Sequential::new(head),
            image_shape: cfg.image_shape,
            n_classes: cfg.n_classes,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Zeroes the classifier head so that every logit is 0.
    pub fn zero_head(&mut self) {
        self.head.zero_last_affine();
    }

    pub fn discriminate<R: Rng + ?Sized>(
        &self,
        x: &ImageBatch,
        mode: Mode,
        rng: &mut R,
    ) -> Result<DiscriminatorOutput> {
        check_images(x, self.image_shape, "discriminate")?;
        let t = self.forward(&x.to_flat(), mode, rng);
        check_finite(t.logits(), "discriminator logits")?;
        Ok(DiscriminatorOutput {
            logits: t.head.output,
            features: t.body.output,
        })
    }

    pub(crate) fn forward<R: Rng + ?Sized>(
        &self,
        x: &Array2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> DiscriminatorTrace {
        let body = self.body.forward(x, mode, rng);
        let head = self.head.forward(&body.output, mode, rng);
        DiscriminatorTrace { body, head }
    }

    /// Backpropagates gradients arriving at the logits and, optionally, at
    /// the feature tap. Returns the input gradient if `input` is set and the
    /// parameter gradients (body then head) if `params` is set.
    pub(crate) fn backward(
        &self,
        trace: &DiscriminatorTrace,
        d_logits: Array2<f64>,
        d_features: Option<&Array2<f64>>,
        need: Need,
    ) -> (Option<Array2<f64>>, Option<Grads>) {
        let (d_feat, head_grads) = self.head.backward(
            &trace.head,
            d_logits,
            Need {
                input: true,
                params: need.params,
            },
        );
        let mut d_feat = d_feat.expect("input requested");
        if let Some(extra) = d_features {
            d_feat += extra;
        }
        let (dx, body_grads) = self.body.backward(&trace.body, d_feat, need);
        let grads = body_grads.zip(head_grads).map(|(mut b, h)| {
            b.0.extend(h.0);
            b
        });
        (dx, grads)
    }

    pub(crate) fn commit(&mut self, trace: &DiscriminatorTrace) {
        self.body.commit(&trace.body);
        self.head.commit(&trace.head);
    }
}

impl Network for Discriminator {
    fn parts(&self) -> Vec<(&'static str, &Sequential)> {
        vec![("body", &self.body), ("head", &self.head)]
    }
    fn parts_mut(&mut self) -> Vec<&mut Sequential> {
        vec![&mut self.body, &mut self.head]
    }
}

/// Row-wise softmax over `n + 1` logits with max subtraction. Column `n` is
/// `p(fake | x)`; columns `0..n` are `p(class i, real | x)`.
pub fn class_probabilities(logits: &Array2<f64>) -> Result<Array2<f64>> {
    check_finite(logits, "logits")?;
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(p)
}

/// Argmax over the real-class entries of one probability row; the trailing
/// fake entry is ignored and ties go to the lowest index.
pub fn predict_class(probs: ArrayView1<'_, f64>) -> usize {
    let real = probs.len().saturating_sub(1);
    let mut best = 0;
    for i in 1..real {
        if probs[i] > probs[best] {
            best = i;
        }
    }
    best
}

/// [`predict_class`] for every row.
pub fn predict_classes(probs: &Array2<f64>) -> Vec<usize> {
    probs.rows().into_iter().map(predict_class).collect()
}
