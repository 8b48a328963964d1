//! Layers with explicit forward caches and hand-derived backward passes.
//!
//! Every layer maps `(batch, in_len)` rows to `(batch, out_len)` rows.
//! Spatial layers interpret a row as an NHWC image.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::conv::{col2im, im2col, ConvGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, batch-norm uses batch statistics.
    Train,
    /// Deterministic inference with running statistics.
    Eval,
}

/// Which gradients a backward pass must produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Need {
    pub input: bool,
    pub params: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    Zeros,
    /// Zero-mean normal with the given standard deviation.
    Normal(f64),
    /// Glorot/Xavier uniform over `fan_in + fan_out`.
    Glorot,
}

impl Init {
    fn fill<R: Rng + ?Sized>(
        self,
        len: usize,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Vec<f64> {
        match self {
            Init::Zeros => vec![0.0; len],
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("std is finite and non-negative");
                (0..len).map(|_| dist.sample(rng)).collect()
            }
            Init::Glorot => {
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit).expect("limit is finite");
                (0..len).map(|_| dist.sample(rng)).collect()
            }
        }
    }
}

/// Affine map `y = x W + b` with `W` of shape `(in, out)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, init: Init, rng: &mut R) -> Self {
        let w = init.fill(input * output, input, output, rng);
        Self {
            weight: Array2::from_shape_vec((input, output), w).expect("sized"),
            bias: Array1::zeros(output),
        }
    }
}

/// Strided convolution, weights `(kernel * kernel * in_c, out_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub geom: ConvGeometry,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Conv2d {
    pub fn new<R: Rng + ?Sized>(geom: ConvGeometry, out_c: usize, init: Init, rng: &mut R) -> Self {
        let patch = geom.patch_len();
        let w = init.fill(patch * out_c, patch, out_c, rng);
        Self {
            geom,
            weight: Array2::from_shape_vec((patch, out_c), w).expect("sized"),
            bias: Array1::zeros(out_c),
        }
    }

    pub fn out_channels(&self) -> usize {
        self.bias.len()
    }
}

/// Fractionally strided convolution: the adjoint of a [`Conv2d`] whose
/// geometry maps the *output* grid onto the input grid. Weights are
/// `(kernel * kernel * out_c, in_c)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvTranspose2d {
    pub geom: ConvGeometry,
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl ConvTranspose2d {
    /// `geom` is the geometry of the forward convolution from the
    /// `(out_h, out_w, out_c)` result back to the `in_c`-channel input.
    pub fn new<R: Rng + ?Sized>(geom: ConvGeometry, in_c: usize, init: Init, rng: &mut R) -> Self {
        let patch = geom.patch_len();
        let w = init.fill(patch * in_c, in_c, patch, rng);
        Self {
            geom,
            weight: Array2::from_shape_vec((patch, in_c), w).expect("sized"),
            bias: Array1::zeros(geom.in_c),
        }
    }
}

/// Per-channel batch normalization. For dense activations the channel count
/// equals the feature count.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense(Dense),
    Conv(Conv2d),
    ConvTranspose(ConvTranspose2d),
    BatchNorm(BatchNorm),
    LeakyRelu(f64),
    Relu,
    Tanh,
    Dropout(f64),
}

/// What a layer keeps from its forward pass.
#[derive(Debug, Clone)]
pub enum Cache {
    None,
    Input(Array2<f64>),
    Output(Array2<f64>),
    Cols(Array2<f64>),
    Mask(Array2<f64>),
    BatchNormTrain {
        x_hat: Array2<f64>,
        inv_std: Array1<f64>,
        mean: Array1<f64>,
        var_unbiased: Array1<f64>,
    },
    BatchNormEval {
        x_hat: Array2<f64>,
        inv_std: Array1<f64>,
    },
}

fn add_channel_bias(y: &mut Array2<f64>, bias: &Array1<f64>) {
    let c = bias.len();
    for mut row in y.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v += bias[j % c];
        }
    }
}

fn channel_sums(dy: &Array2<f64>, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; c];
    for row in dy.rows() {
        for (j, v) in row.iter().enumerate() {
            out[j % c] += v;
        }
    }
    out
}

fn reshape(x: Array2<f64>, rows: usize, cols: usize) -> Array2<f64> {
    let x = if x.is_standard_layout() {
        x
    } else {
        x.as_standard_layout().into_owned()
    };
    x.into_shape_with_order((rows, cols))
        .expect("element count preserved")
}

fn contiguous(x: &Array2<f64>) -> std::borrow::Cow<'_, [f64]> {
    match x.as_slice() {
        Some(s) => std::borrow::Cow::Borrowed(s),
        None => std::borrow::Cow::Owned(x.iter().copied().collect()),
    }
}

impl Layer {
    pub fn forward<R: Rng + ?Sized>(
        &self,
        x: &Array2<f64>,
        mode: Mode,
        rng: &mut R,
    ) -> (Array2<f64>, Cache) {
        let n = x.nrows();
        match self {
            Layer::Dense(d) => {
                let y = x.dot(&d.weight) + &d.bias;
                (y, Cache::Input(x.clone()))
            }
            Layer::Conv(c) => {
                let g = &c.geom;
                let cols = im2col(&contiguous(x), n, g);
                let mut y = reshape(cols.dot(&c.weight), n, g.positions() * c.out_channels());
                add_channel_bias(&mut y, &c.bias);
                (y, Cache::Cols(cols))
            }
            Layer::ConvTranspose(t) => {
                let g = &t.geom;
                let xr = reshape(x.clone(), n * g.positions(), t.weight.ncols());
                let cols = xr.dot(&t.weight.t());
                let mut y = col2im(&contiguous(&cols), n, g);
                add_channel_bias(&mut y, &t.bias);
                (y, Cache::Input(x.clone()))
            }
            Layer::BatchNorm(bn) => bn_forward(bn, x, mode),
            Layer::LeakyRelu(alpha) => {
                let y = x.mapv(|v| if v > 0.0 { v } else { alpha * v });
                (y, Cache::Input(x.clone()))
            }
            Layer::Relu => (x.mapv(|v| v.max(0.0)), Cache::Input(x.clone())),
            Layer::Tanh => {
                let y = x.mapv(f64::tanh);
                (y.clone(), Cache::Output(y))
            }
            Layer::Dropout(rate) => {
                if mode == Mode::Eval || *rate == 0.0 {
                    return (x.clone(), Cache::None);
                }
                let keep = 1.0 / (1.0 - rate);
                let mask = Array2::from_shape_simple_fn(x.raw_dim(), || {
                    if rng.random::<f64>() >= *rate {
                        keep
                    } else {
                        0.0
                    }
                });
                (x * &mask, Cache::Mask(mask))
            }
        }
    }

    /// Returns the input gradient (if requested) and the parameter gradients
    /// in [`Layer::params`] order (empty unless requested).
    pub fn backward(
        &self,
        cache: &Cache,
        dy: Array2<f64>,
        need: Need,
    ) -> (Option<Array2<f64>>, Vec<Vec<f64>>) {
        let n = dy.nrows();
        match (self, cache) {
            (Layer::Dense(d), Cache::Input(x)) => {
                let grads = if need.params {
                    let dw = x.t().dot(&dy);
                    let db = dy.sum_axis(Axis(0));
                    vec![flat(dw), db.to_vec()]
                } else {
                    Vec::new()
                };
                let dx = need.input.then(|| dy.dot(&d.weight.t()));
                (dx, grads)
            }
            (Layer::Conv(c), Cache::Cols(cols)) => {
                let g = &c.geom;
                let oc = c.out_channels();
                let dyr = reshape(dy, n * g.positions(), oc);
                let grads = if need.params {
                    let dw = cols.t().dot(&dyr);
                    let db = dyr.sum_axis(Axis(0));
                    vec![flat(dw), db.to_vec()]
                } else {
                    Vec::new()
                };
                let dx = need.input.then(|| {
                    let dcols = dyr.dot(&c.weight.t());
                    col2im(&contiguous(&dcols), n, g)
                });
                (dx, grads)
            }
            (Layer::ConvTranspose(t), Cache::Input(x)) => {
                let g = &t.geom;
                let in_c = t.weight.ncols();
                let dcols = im2col(&contiguous(&dy), n, g);
                let grads = if need.params {
                    let xr = reshape(x.clone(), n * g.positions(), in_c);
                    let dw = dcols.t().dot(&xr);
                    let db = channel_sums(&dy, t.bias.len());
                    vec![flat(dw), db]
                } else {
                    Vec::new()
                };
                let dx = need
                    .input
                    .then(|| reshape(dcols.dot(&t.weight), n, g.positions() * in_c));
                (dx, grads)
            }
            (Layer::BatchNorm(bn), cache) => bn_backward(bn, cache, dy, need),
            (Layer::LeakyRelu(alpha), Cache::Input(x)) => {
                let mut dx = dy;
                dx.zip_mut_with(x, |g, &v| {
                    if v <= 0.0 {
                        *g *= alpha
                    }
                });
                (need.input.then_some(dx), Vec::new())
            }
            (Layer::Relu, Cache::Input(x)) => {
                let mut dx = dy;
                dx.zip_mut_with(x, |g, &v| {
                    if v <= 0.0 {
                        *g = 0.0
                    }
                });
                (need.input.then_some(dx), Vec::new())
            }
            (Layer::Tanh, Cache::Output(y)) => {
                let mut dx = dy;
                dx.zip_mut_with(y, |g, &t| *g *= 1.0 - t * t);
                (need.input.then_some(dx), Vec::new())
            }
            (Layer::Dropout(_), Cache::Mask(mask)) => (need.input.then(|| dy * mask), Vec::new()),
            (Layer::Dropout(_), Cache::None) => (need.input.then_some(dy), Vec::new()),
            (layer, cache) => panic!("cache {cache:?} does not belong to layer {}", layer.kind()),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Dense(_) => "dense",
            Layer::Conv(_) => "conv",
            Layer::ConvTranspose(_) => "conv_transpose",
            Layer::BatchNorm(_) => "batch_norm",
            Layer::LeakyRelu(_) => "leaky_relu",
            Layer::Relu => "relu",
            Layer::Tanh => "tanh",
            Layer::Dropout(_) => "dropout",
        }
    }

    /// Trainable tensors as `(name, shape, values)`.
    pub fn params(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        fn t<'a, D: ndarray::Dimension>(
            name: &'static str,
            a: &'a ndarray::Array<f64, D>,
        ) -> (&'static str, Vec<usize>, &'a [f64]) {
            (
                name,
                a.shape().to_vec(),
                a.as_slice().expect("parameters are contiguous"),
            )
        }
        match self {
            Layer::Dense(d) => vec![t("weight", &d.weight), t("bias", &d.bias)],
            Layer::Conv(c) => vec![t("weight", &c.weight), t("bias", &c.bias)],
            Layer::ConvTranspose(c) => vec![t("weight", &c.weight), t("bias", &c.bias)],
            Layer::BatchNorm(bn) => vec![t("gamma", &bn.gamma), t("beta", &bn.beta)],
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        fn s<D: ndarray::Dimension>(a: &mut ndarray::Array<f64, D>) -> &mut [f64] {
            a.as_slice_mut().expect("parameters are contiguous")
        }
        match self {
            Layer::Dense(d) => vec![s(&mut d.weight), s(&mut d.bias)],
            Layer::Conv(c) => vec![s(&mut c.weight), s(&mut c.bias)],
            Layer::ConvTranspose(c) => vec![s(&mut c.weight), s(&mut c.bias)],
            Layer::BatchNorm(bn) => vec![s(&mut bn.gamma), s(&mut bn.beta)],
            _ => Vec::new(),
        }
    }

    /// Non-trainable state (batch-norm running statistics).
    pub fn buffers(&self) -> Vec<(&'static str, Vec<usize>, &[f64])> {
        match self {
            Layer::BatchNorm(bn) => vec![
                (
                    "running_mean",
                    vec![bn.channels()],
                    bn.running_mean.as_slice().expect("contiguous"),
                ),
                (
                    "running_var",
                    vec![bn.channels()],
                    bn.running_var.as_slice().expect("contiguous"),
                ),
            ],
            _ => Vec::new(),
        }
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Layer::BatchNorm(bn) => vec![
                bn.running_mean.as_slice_mut().expect("contiguous"),
                bn.running_var.as_slice_mut().expect("contiguous"),
            ],
            _ => Vec::new(),
        }
    }

    /// Folds the batch statistics of a training-mode forward pass into the
    /// running averages.
    pub fn commit(&mut self, cache: &Cache) {
        if let (
            Layer::BatchNorm(bn),
            Cache::BatchNormTrain {
                mean, var_unbiased, ..
            },
        ) = (self, cache)
        {
            let m = bn.momentum;
            bn.running_mean
                .zip_mut_with(mean, |r, &b| *r = (1.0 - m) * *r + m * b);
            bn.running_var
                .zip_mut_with(var_unbiased, |r, &b| *r = (1.0 - m) * *r + m * b);
        }
    }
}

fn bn_forward(bn: &BatchNorm, x: &Array2<f64>, mode: Mode) -> (Array2<f64>, Cache) {
    let c = bn.channels();
    let count = (x.len() / c) as f64;
    let (mean, var) = match mode {
        Mode::Train => {
            let mut mean = vec![0.0; c];
            for row in x.rows() {
                for (j, v) in row.iter().enumerate() {
                    mean[j % c] += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= count);
            let mut var = vec![0.0; c];
            for row in x.rows() {
                for (j, v) in row.iter().enumerate() {
                    let d = v - mean[j % c];
                    var[j % c] += d * d;
                }
            }
            var.iter_mut().for_each(|v| *v /= count);
            (Array1::from(mean), Array1::from(var))
        }
        Mode::Eval => (bn.running_mean.clone(), bn.running_var.clone()),
    };
    let inv_std = var.mapv(|v| 1.0 / (v + bn.eps).sqrt());
    let mut x_hat = x.clone();
    for mut row in x_hat.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - mean[j % c]) * inv_std[j % c];
        }
    }
    let mut y = x_hat.clone();
    for mut row in y.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = bn.gamma[j % c] * *v + bn.beta[j % c];
        }
    }
    let cache = match mode {
        Mode::Train => {
            let scale = if count > 1.0 {
                count / (count - 1.0)
            } else {
                1.0
            };
            Cache::BatchNormTrain {
                x_hat,
                inv_std,
                mean,
                var_unbiased: var * scale,
            }
        }
        Mode::Eval => Cache::BatchNormEval { x_hat, inv_std },
    };
    (y, cache)
}

fn bn_backward(
    bn: &BatchNorm,
    cache: &Cache,
    dy: Array2<f64>,
    need: Need,
) -> (Option<Array2<f64>>, Vec<Vec<f64>>) {
    let c = bn.channels();
    let (x_hat, inv_std, train) = match cache {
        Cache::BatchNormTrain { x_hat, inv_std, .. } => (x_hat, inv_std, true),
        Cache::BatchNormEval { x_hat, inv_std } => (x_hat, inv_std, false),
        other => panic!("cache {other:?} does not belong to batch_norm"),
    };
    let mut dbeta = vec![0.0; c];
    let mut dgamma = vec![0.0; c];
    for (dr, xr) in dy.rows().into_iter().zip(x_hat.rows()) {
        for (j, (g, xh)) in dr.iter().zip(xr.iter()).enumerate() {
            dbeta[j % c] += g;
            dgamma[j % c] += g * xh;
        }
    }
    let dx = need.input.then(|| {
        let mut dx = dy.clone();
        if train {
            let count = (dy.len() / c) as f64;
            for (mut dr, xr) in dx.rows_mut().into_iter().zip(x_hat.rows()) {
                for (j, (g, xh)) in dr.iter_mut().zip(xr.iter()).enumerate() {
                    let k = j % c;
                    *g =
                        bn.gamma[k] * inv_std[k] / count * (count * *g - dbeta[k] - xh * dgamma[k]);
                }
            }
        } else {
            for mut dr in dx.rows_mut() {
                for (j, g) in dr.iter_mut().enumerate() {
                    *g *= bn.gamma[j % c] * inv_std[j % c];
                }
            }
        }
        dx
    });
    let grads = if need.params {
        vec![dgamma, dbeta]
    } else {
        Vec::new()
    };
    (dx, grads)
}

fn flat(a: Array2<f64>) -> Vec<f64> {
    if a.is_standard_layout() {
        a.into_raw_vec_and_offset().0
    } else {
        a.iter().copied().collect()
    }
}
