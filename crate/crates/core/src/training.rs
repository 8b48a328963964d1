//! The multi-adversarial training step and the outer training loop.
//!
//! One step runs, in order: an update of every discriminator `D_k` on its own
//! fresh real and noise minibatches, a generator update against the ensemble
//! feedback with all discriminators frozen, and an encoder update with the
//! generator and discriminators frozen. Each phase is exposed as an
//! `*_objective` function that computes its loss and parameter gradients
//! without mutating anything, which is what the gradient checks exercise.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{batch_stream, BatchStream, SemiSupervisedView, StreamKind};
use crate::ensemble::{aggregate_mean, EnsembleConfig, EnsembleMode};
use crate::error::{Error, Result};
use crate::losses::{self, LossBreakdown};
use crate::networks::{
    class_probabilities, reparameterize, standard_normal, Discriminator, DiscriminatorTrace,
    Encoder, EncoderOutput, Generator, Network, NetworkConfig,
};
use crate::nn::{Grads, Mode, Need, Trace};
use crate::optim::{build_optimizer, Adam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// Generator and one semi-supervised discriminator; no encoder.
    DcGan,
    /// Encoder, generator and one discriminator.
    VaeGan,
    /// Encoder, generator and an ensemble of `K` discriminators.
    Maven,
}

impl ModelKind {
    pub fn has_encoder(self) -> bool {
        self != ModelKind::DcGan
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dcgan" | "dc-gan" => Ok(ModelKind::DcGan),
            "vaegan" | "vae-gan" => Ok(ModelKind::VaeGan),
            "maven" => Ok(ModelKind::Maven),
            other => Err(Error::Config(format!(
                "unknown model {other:?}; expected dcgan, vaegan or maven"
            ))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::DcGan => "dcgan",
            ModelKind::VaeGan => "vaegan",
            ModelKind::Maven => "maven",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub network: NetworkConfig,
    pub ensemble: EnsembleConfig,
}

impl ModelConfig {
    /// The single-discriminator baselines.
    pub fn baseline(kind: ModelKind, network: NetworkConfig) -> Self {
        Self {
            kind,
            network,
            ensemble: EnsembleConfig::uniform(1, EnsembleMode::Mean),
        }
    }

    pub fn maven(network: NetworkConfig, ensemble: EnsembleConfig) -> Self {
        Self {
            kind: ModelKind::Maven,
            network,
            ensemble,
        }
    }

    /// Row label used in reports, e.g. `MAVEN-mean (K=3)`.
    pub fn label(&self) -> String {
        match self.kind {
            ModelKind::DcGan => "DC-GAN".into(),
            ModelKind::VaeGan => "VAE-GAN".into(),
            ModelKind::Maven => format!("MAVEN-{} (K={})", self.ensemble.mode, self.ensemble.k),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.ensemble.validate()?;
        if self.kind != ModelKind::Maven && self.ensemble.k != 1 {
            return Err(Error::Config(format!(
                "{} uses exactly one discriminator, got k = {}",
                self.kind, self.ensemble.k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Samples drawn per epoch; steps per epoch is `samples_per_epoch / batch_size`.
    pub samples_per_epoch: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub labeled_fraction: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub lr_e: f64,
    pub adam_beta1: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            samples_per_epoch: 1000,
            batch_size: 64,
            epochs: 1,
            labeled_fraction: 0.1,
            lr_g: 2e-4,
            lr_d: 2e-4,
            lr_e: 1e-5,
            adam_beta1: 0.5,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn steps_per_epoch(&self) -> usize {
        self.samples_per_epoch / self.batch_size.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.steps_per_epoch() == 0 {
            return Err(Error::Config(format!(
                "samples_per_epoch {} is smaller than batch_size {}",
                self.samples_per_epoch, self.batch_size
            )));
        }
        for (name, lr) in [
            ("lr_g", self.lr_g),
            ("lr_d", self.lr_d),
            ("lr_e", self.lr_e),
        ] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        if !(self.labeled_fraction > 0.0 && self.labeled_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "labeled_fraction must be in (0, 1], got {}",
                self.labeled_fraction
            )));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) {
            return Err(Error::Config(format!(
                "adam_beta1 must be in [0, 1), got {}",
                self.adam_beta1
            )));
        }
        Ok(())
    }
}

/// Everything a training run owns.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub encoder: Option<Encoder>,
    pub generator: Generator,
    pub discriminators: Vec<Discriminator>,
    pub opt_e: Option<Adam>,
    pub opt_g: Adam,
    pub opt_d: Vec<Adam>,
    pub epoch: usize,
    pub step: usize,
    pub rng: ChaCha8Rng,
}

impl ModelState {
    /// Fresh networks and optimizers, initialized from `seed` in the order
    /// encoder, generator, `D_1..D_K`.
    pub fn new(config: ModelConfig, training: &TrainingConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut init = ChaCha8Rng::seed_from_u64(seed);
        let encoder = if config.kind.has_encoder() {
            Some(Encoder::new(&config.network, &mut init)?)
        } else {
            None
        };
        let generator = Generator::new(&config.network, &mut init)?;
        let discriminators = (0..config.ensemble.k)
            .map(|_| Discriminator::new(&config.network, &mut init))
            .collect::<Result<Vec<_>>>()?;
        let beta1 = training.adam_beta1;
        let opt_e = match &encoder {
            Some(e) => Some(build_optimizer(&e.params(), training.lr_e, beta1)?),
            None => None,
        };
        let opt_g = build_optimizer(&generator.params(), training.lr_g, beta1)?;
        let opt_d = discriminators
            .iter()
            .map(|d| build_optimizer(&d.params(), training.lr_d, beta1))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            encoder,
            generator,
            discriminators,
            opt_e,
            opt_g,
            opt_d,
            epoch: 0,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)),
        })
    }

    /// Sets every optimizer's step size.
    pub fn set_learning_rates(&mut self, lr_g: f64, lr_d: f64, lr_e: f64) -> Result<()> {
        self.opt_g.set_learning_rate(lr_g)?;
        for o in &mut self.opt_d {
            o.set_learning_rate(lr_d)?;
        }
        if let Some(o) = &mut self.opt_e {
            o.set_learning_rate(lr_e)?;
        }
        Ok(())
    }

    /// Discriminator class probabilities averaged over the ensemble, in eval mode.
    pub fn classify(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut acc: Option<Array2<f64>> = None;
        for d in &self.discriminators {
            let p = class_probabilities(d.forward(rows, Mode::Eval, &mut rng).logits())?;
            acc = Some(match acc {
                Some(a) => a + p,
                None => p,
            });
        }
        Ok(acc.expect("at least one discriminator") / self.discriminators.len() as f64)
    }

    /// `count` generated samples as flattened rows, in eval mode.
    pub fn sample(&self, count: usize, rng: &mut impl Rng) -> Array2<f64> {
        let z = standard_normal((count, self.config.network.latent_dim), rng);
        self.generator.forward(&z, Mode::Eval, rng).output
    }
}

/// Where a step draws its minibatches from.
pub trait BatchSource {
    /// A fresh minibatch of real images (labeled or not), as flattened rows.
    fn next_real(&mut self) -> Array2<f64>;
    /// The step's labeled minibatch; may be empty.
    fn next_labeled(&mut self) -> (Array2<f64>, Vec<usize>);
}

/// Streams over a semi-supervised view: real batches come from every item,
/// labeled batches from the labeled subset.
pub struct StreamSource {
    real: BatchStream,
    labeled: BatchStream,
}

impl StreamSource {
    pub fn new(view: &SemiSupervisedView, batch_size: usize, seed: u64) -> Result<Self> {
        let labeled_b = batch_size.min(view.labeled_count().max(1));
        Ok(Self {
            real: batch_stream(view, batch_size, StreamKind::Any, seed)?,
            labeled: batch_stream(view, labeled_b, StreamKind::Labeled, seed.wrapping_add(1))?,
        })
    }
}

impl BatchSource for StreamSource {
    fn next_real(&mut self) -> Array2<f64> {
        self.real.next_indexed().1.to_flat()
    }

    fn next_labeled(&mut self) -> (Array2<f64>, Vec<usize>) {
        let b = self.labeled.next_indexed().1;
        let labels = b.labels.clone().unwrap_or_default();
        (b.to_flat(), labels)
    }
}

/// How the generator-facing feedback is formed from the discriminators.
#[derive(Debug, Clone, PartialEq)]
pub enum Feedback {
    /// Weighted mean of every discriminator's output.
    Mean(Vec<f64>),
    /// Only the discriminator at this index.
    Single(usize),
}

impl Feedback {
    fn coefficients(&self, k: usize) -> Vec<f64> {
        match self {
            Feedback::Mean(w) => w.iter().map(|w| w / k as f64).collect(),
            Feedback::Single(s) => (0..k).map(|i| if i == *s { 1.0 } else { 0.0 }).collect(),
        }
    }

    fn combine(&self, outputs: &[Array1<f64>]) -> Result<Array1<f64>> {
        match self {
            Feedback::Mean(w) => Ok(aggregate_mean(outputs, w)?.value),
            Feedback::Single(s) => Ok(outputs[*s].clone()),
        }
    }
}

/// A loss with its parameter gradients and the forward traces to commit.
#[derive(Debug, Clone)]
pub struct Objective<T> {
    pub losses: LossBreakdown,
    pub value: f64,
    pub grads: Grads,
    pub(crate) commit: T,
}

/// Inputs to one discriminator update.
#[derive(Debug, Clone)]
pub struct DiscriminatorBatch {
    pub real: Array2<f64>,
    pub labeled: Array2<f64>,
    pub labels: Vec<usize>,
    pub fake1: Array2<f64>,
    pub fake2: Option<Array2<f64>>,
}

fn probs_and_backward<F>(
    d: &Discriminator,
    x: &Array2<f64>,
    rng: &mut impl Rng,
    grads: &mut Grads,
    loss: F,
) -> Result<(f64, DiscriminatorTrace)>
where
    F: FnOnce(&Array2<f64>) -> Result<losses::LossGrad<Array2<f64>>>,
{
    let trace = d.forward(x, Mode::Train, rng);
    let probs = class_probabilities(trace.logits())?;
    let lg = loss(&probs)?;
    let d_logits = losses::softmax_backward(&probs, &lg.grad);
    let (_, g) = d.backward(
        &trace,
        d_logits,
        None,
        Need {
            input: false,
            params: true,
        },
    );
    grads.add_assign(&g.expect("params requested"));
    Ok((lg.value, trace))
}

/// Supervised plus unsupervised discriminator loss and its gradient.
pub fn discriminator_objective(
    d: &Discriminator,
    batch: &DiscriminatorBatch,
    rng: &mut impl Rng,
) -> Result<Objective<DiscriminatorTrace>> {
    let mut grads = Grads(d.params().iter().map(|t| vec![0.0; t.data.len()]).collect());
    let mut l = LossBreakdown::default();
    let (real, real_trace) = probs_and_backward(
        d,
        &batch.real,
        rng,
        &mut grads,
        losses::d_real_loss_with_grad,
    )?;
    l.d_real = real;
    if batch.labels.is_empty() {
        log::warn!("empty labeled batch; skipping the supervised term");
    } else {
        let labels = &batch.labels;
        l.d_supervised = probs_and_backward(d, &batch.labeled, rng, &mut grads, |p| {
            losses::d_supervised_loss_with_grad(p, labels)
        })?
        .0;
    }
    l.d_fake1 = probs_and_backward(
        d,
        &batch.fake1,
        rng,
        &mut grads,
        losses::d_fake_loss_with_grad,
    )?
    .0;
    if let Some(fake2) = &batch.fake2 {
        l.d_fake2 = probs_and_backward(d, fake2, rng, &mut grads, losses::d_fake_loss_with_grad)?.0;
    }
    let l = l.with_totals();
    Ok(Objective {
        value: l.loss_d,
        losses: l,
        grads,
        commit: real_trace,
    })
}

/// Inputs to the generator update. `z_recon` is the encoder's latent code for
/// `real`, absent for models without an encoder.
#[derive(Debug, Clone)]
pub struct GeneratorBatch {
    pub real: Array2<f64>,
    pub z: Array2<f64>,
    pub z_recon: Option<Array2<f64>>,
}

/// Per-discriminator forward trace and probabilities; `None` where skipped.
type Traces = Vec<Option<(DiscriminatorTrace, Array2<f64>)>>;

/// Adversarial loss on the ensemble feedback for one set of generated images.
/// Returns the loss, the gradient w.r.t. the images, and the per-discriminator
/// traces (only computed where the coefficient is non-zero).
fn adversarial_through(
    ds: &[Discriminator],
    feedback: &Feedback,
    coeffs: &[f64],
    fake: &Array2<f64>,
    rng: &mut impl Rng,
) -> Result<(f64, Traces)> {
    let n = ds[0].n_classes();
    let mut traces = Vec::with_capacity(ds.len());
    let mut p_fake = Vec::with_capacity(ds.len());
    for (d, &c) in ds.iter().zip(coeffs) {
        if c == 0.0 {
            traces.push(None);
            p_fake.push(Array1::zeros(fake.nrows()));
            continue;
        }
        let t = d.forward(fake, Mode::Train, rng);
        let probs = class_probabilities(t.logits())?;
        p_fake.push(probs.column(n).to_owned());
        traces.push(Some((t, probs)));
    }
    let combined = feedback.combine(&p_fake)?;
    let lg = losses::g_adversarial_loss_with_grad(combined.view())?;
    let mut out = Vec::with_capacity(ds.len());
    for (t, &c) in traces.into_iter().zip(coeffs) {
        out.push(t.map(|(t, probs)| {
            let mut d_probs = Array2::zeros(probs.raw_dim());
            d_probs.column_mut(n).assign(&(&lg.grad * c));
            let d_logits = losses::softmax_backward(&probs, &d_probs);
            (t, d_logits)
        }));
    }
    Ok((lg.value, out))
}

/// Feature matching `sum_k c_k || mean f_k(real) - mean f_k(fake) ||^2`, with
/// the gradient arriving at each discriminator's fake-side features.
fn feature_term(
    ds: &[Discriminator],
    coeffs: &[f64],
    real: &Array2<f64>,
    fake_traces: &[Option<DiscriminatorTrace>],
    rng: &mut impl Rng,
) -> Result<(f64, Vec<Option<Array2<f64>>>)> {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(ds.len());
    for ((d, &c), ft) in ds.iter().zip(coeffs).zip(fake_traces) {
        match ft {
            Some(ft) if c != 0.0 => {
                let real_features = d.forward(real, Mode::Train, rng).features().clone();
                let fm = losses::feature_matching_loss_with_grad(&real_features, ft.features())?;
                total += c * fm.value;
                grads.push(Some(fm.grad.fake * c));
            }
            _ => grads.push(None),
        }
    }
    Ok((total, grads))
}

/// Input gradient of the discriminators for given logit and feature gradients.
fn input_grad(
    ds: &[Discriminator],
    traces: Vec<Option<(DiscriminatorTrace, Array2<f64>)>>,
    d_features: &[Option<Array2<f64>>],
    rows: usize,
    cols: usize,
) -> Array2<f64> {
    let mut dx = Array2::zeros((rows, cols));
    for ((d, t), df) in ds.iter().zip(traces).zip(d_features) {
        if let Some((t, d_logits)) = t {
            let (g, _) = d.backward(
                &t,
                d_logits,
                df.as_ref(),
                Need {
                    input: true,
                    params: false,
                },
            );
            dx += &g.expect("input requested");
        }
    }
    dx
}

/// Generator loss (feature matching plus adversarial terms on both fake
/// sources) and its gradient, with the discriminators frozen.
pub fn generator_objective(
    g: &Generator,
    ds: &[Discriminator],
    feedback: &Feedback,
    batch: &GeneratorBatch,
    rng: &mut impl Rng,
) -> Result<Objective<Trace>> {
    let coeffs = feedback.coefficients(ds.len());
    let t1 = g.forward(&batch.z, Mode::Train, rng);
    let fake1 = t1.output.clone();
    let (adv1, traces1) = adversarial_through(ds, feedback, &coeffs, &fake1, rng)?;
    let fake_traces: Vec<Option<DiscriminatorTrace>> = traces1
        .iter()
        .map(|t| t.as_ref().map(|(t, _)| t.clone()))
        .collect();
    let (feature, d_feat) = feature_term(ds, &coeffs, &batch.real, &fake_traces, rng)?;
    let dx1 = input_grad(ds, traces1, &d_feat, fake1.nrows(), fake1.ncols());
    let (_, grads) = g.backward(&t1, dx1, true);
    let mut grads = grads.expect("params requested");

    let mut l = LossBreakdown {
        g_feature: feature,
        g_fake1: adv1,
        ..Default::default()
    };
    if let Some(zr) = &batch.z_recon {
        let t2 = g.forward(zr, Mode::Train, rng);
        let (adv2, traces2) = adversarial_through(ds, feedback, &coeffs, &t2.output, rng)?;
        let none = vec![None; ds.len()];
        let dx2 = input_grad(ds, traces2, &none, t2.output.nrows(), t2.output.ncols());
        let (_, g2) = g.backward(&t2, dx2, true);
        grads.add_assign(&g2.expect("params requested"));
        l.g_fake2 = adv2;
    }
    let l = l.with_totals();
    Ok(Objective {
        value: l.loss_g,
        losses: l,
        grads,
        commit: t1,
    })
}

/// KL plus feature-matching reconstruction loss for the encoder, with the
/// generator and discriminators frozen. `epsilon` is the reparameterization
/// noise.
pub fn encoder_objective(
    e: &Encoder,
    g: &Generator,
    ds: &[Discriminator],
    feedback: &Feedback,
    real: &Array2<f64>,
    epsilon: &Array2<f64>,
    rng: &mut impl Rng,
) -> Result<Objective<Trace>> {
    let coeffs = feedback.coefficients(ds.len());
    let te = e.forward(real, Mode::Train, rng);
    let post: EncoderOutput = e.split(&te);
    let kl = losses::kl_loss_with_grad(&post)?;
    let z = reparameterize(&post, epsilon)?;
    let tg = g.forward(&z.z, Mode::Train, rng);
    let mut traces = Vec::with_capacity(ds.len());
    for (d, &c) in ds.iter().zip(&coeffs) {
        traces.push((c != 0.0).then(|| d.forward(&tg.output, Mode::Train, rng)));
    }
    let (feature, d_feat) = feature_term(ds, &coeffs, real, &traces, rng)?;
    let zero_logits: Vec<Option<(DiscriminatorTrace, Array2<f64>)>> = traces
        .into_iter()
        .map(|t| {
            t.map(|t| {
                let z = Array2::zeros(t.logits().raw_dim());
                (t, z)
            })
        })
        .collect();
    let dx = input_grad(
        ds,
        zero_logits,
        &d_feat,
        tg.output.nrows(),
        tg.output.ncols(),
    );
    let (dz, _) = g.backward(&tg, dx, false);
    let mut d_mu = kl.grad.mu;
    d_mu += &dz;
    let mut d_lv = kl.grad.log_sigma_sq;
    ndarray::Zip::from(&mut d_lv)
        .and(&dz)
        .and(epsilon)
        .and(&post.log_sigma_sq)
        .for_each(|g, &dz, &eps, &lv| *g += dz * eps * 0.5 * (0.5 * lv).exp());
    let grads = e.backward(&te, &d_mu, &d_lv);
    let l = LossBreakdown {
        e_kl: kl.value,
        e_feature: feature,
        ..Default::default()
    }
    .with_totals();
    Ok(Objective {
        value: l.loss_e,
        losses: l,
        grads,
        commit: te,
    })
}

/// Which phase of a step just finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Discriminator(usize),
    Generator,
    Encoder,
}

fn ensure_finite(grads: &Grads, what: &str) -> Result<()> {
    if grads.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("{what} gradient")))
    }
}

/// One full training step.
pub fn train_step(state: &mut ModelState, source: &mut dyn BatchSource) -> Result<LossBreakdown> {
    train_step_observed(state, source, |_, _| {})
}

/// [`train_step`] with a callback after every phase.
pub fn train_step_observed(
    state: &mut ModelState,
    source: &mut dyn BatchSource,
    mut observer: impl FnMut(Phase, &ModelState),
) -> Result<LossBreakdown> {
    let latent = state.config.network.latent_dim;
    let (labeled, labels) = source.next_labeled();

    // One reconstruction per step: encode a real minibatch, shared by every
    // discriminator's fake2 term and by the generator update.
    let real_g = source.next_real();
    let z_recon = match &state.encoder {
        Some(e) => {
            let post = e.split(&e.forward(&real_g, Mode::Train, &mut state.rng));
            let eps = standard_normal(post.mu.dim(), &mut state.rng);
            Some(reparameterize(&post, &eps)?.z)
        }
        None => None,
    };
    let fake2 = z_recon.as_ref().map(|z| {
        state
            .generator
            .forward(z, Mode::Train, &mut state.rng)
            .output
    });

    let mut total = LossBreakdown::default();
    let k_count = state.discriminators.len();
    for k in 0..k_count {
        let real = source.next_real();
        let z = standard_normal((real.nrows(), latent), &mut state.rng);
        let fake1 = state
            .generator
            .forward(&z, Mode::Train, &mut state.rng)
            .output;
        let batch = DiscriminatorBatch {
            real,
            labeled: labeled.clone(),
            labels: labels.clone(),
            fake1,
            fake2: fake2.clone(),
        };
        let obj = discriminator_objective(&state.discriminators[k], &batch, &mut state.rng)?;
        obj.losses
            .check_finite()
            .map_err(|e| Error::NonFinite(format!("discriminator {k}: {e}")))?;
        ensure_finite(&obj.grads, &format!("discriminator {k}"))?;
        let d = &mut state.discriminators[k];
        state.opt_d[k].step(d.params_mut(), &obj.grads)?;
        d.commit(&obj.commit);
        // Losses of all discriminators are averaged in the breakdown.
        total.d_supervised += obj.losses.d_supervised / k_count as f64;
        total.d_real += obj.losses.d_real / k_count as f64;
        total.d_fake1 += obj.losses.d_fake1 / k_count as f64;
        total.d_fake2 += obj.losses.d_fake2 / k_count as f64;
        observer(Phase::Discriminator(k), state);
    }

    let ens = &state.config.ensemble;
    let feedback = match ens.mode {
        EnsembleMode::Mean => Feedback::Mean(ens.weights.clone()),
        EnsembleMode::Random => Feedback::Single(state.rng.random_range(0..k_count)),
    };
    let z = standard_normal((real_g.nrows(), latent), &mut state.rng);
    let gbatch = GeneratorBatch {
        real: real_g,
        z,
        z_recon,
    };
    let obj = generator_objective(
        &state.generator,
        &state.discriminators,
        &feedback,
        &gbatch,
        &mut state.rng,
    )?;
    obj.losses
        .check_finite()
        .map_err(|e| Error::NonFinite(format!("generator: {e}")))?;
    ensure_finite(&obj.grads, "generator")?;
    state.opt_g.step(state.generator.params_mut(), &obj.grads)?;
    state.generator.commit(&obj.commit);
    total.g_feature = obj.losses.g_feature;
    total.g_fake1 = obj.losses.g_fake1;
    total.g_fake2 = obj.losses.g_fake2;
    observer(Phase::Generator, state);

    if let Some(e) = state.encoder.as_ref() {
        let real = source.next_real();
        let eps = standard_normal((real.nrows(), latent), &mut state.rng);
        let obj = encoder_objective(
            e,
            &state.generator,
            &state.discriminators,
            &feedback,
            &real,
            &eps,
            &mut state.rng,
        )?;
        obj.losses
            .check_finite()
            .map_err(|e| Error::NonFinite(format!("encoder: {e}")))?;
        ensure_finite(&obj.grads, "encoder")?;
        let e = state.encoder.as_mut().expect("checked");
        state
            .opt_e
            .as_mut()
            .expect("encoder has optimizer")
            .step(e.params_mut(), &obj.grads)?;
        e.commit(&obj.commit);
        total.e_kl = obj.losses.e_kl;
        total.e_feature = obj.losses.e_feature;
        observer(Phase::Encoder, state);
    }
    state.step += 1;
    Ok(total.with_totals())
}

/// One history row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistoryRow {
    pub step: usize,
    pub epoch: usize,
    pub losses: LossBreakdown,
}

impl HistoryRow {
    pub fn csv_header() -> String {
        let mut cols = vec!["step", "epoch"];
        cols.extend(LossBreakdown::CSV_COLUMNS);
        cols.join(",")
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{},{}", self.step, self.epoch);
        for v in self.losses.values() {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Training-history CSV, one row per step.
    pub history_path: Option<PathBuf>,
    /// Checkpoints are written under this directory.
    pub checkpoint_dir: Option<PathBuf>,
    /// Checkpoint every this many steps (0 = only at termination).
    pub checkpoint_every: usize,
    /// Print a progress line per epoch.
    pub progress: bool,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub state: ModelState,
    pub history: Vec<HistoryRow>,
    pub checkpoints: Vec<PathBuf>,
}

/// Runs `epochs * steps_per_epoch` steps from a freshly initialized model.
pub fn train(
    view: &SemiSupervisedView,
    model: ModelConfig,
    cfg: &TrainingConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if model.network.image_shape != view.split.shape() {
        return Err(Error::shape(
            "train image shape",
            model.network.image_shape,
            view.split.shape(),
        ));
    }
    if model.network.n_classes != view.split.n_classes() {
        return Err(Error::shape(
            "train class count",
            model.network.n_classes,
            view.split.n_classes(),
        ));
    }
    let state = ModelState::new(model, cfg, cfg.seed)?;
    let mut source = StreamSource::new(view, cfg.batch_size, cfg.seed)?;
    train_from(state, &mut source, cfg, opts)
}

/// Continues training `state` with batches from `source`.
pub fn train_from(
    mut state: ModelState,
    source: &mut dyn BatchSource,
    cfg: &TrainingConfig,
    opts: &TrainOptions,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut history_file = match &opts.history_path {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "{}", HistoryRow::csv_header()).map_err(|e| Error::io(p, e))?;
            Some((w, p.clone()))
        }
        None => None,
    };
    let mut history = Vec::new();
    let mut checkpoints = Vec::new();
    let steps = cfg.steps_per_epoch();
    let started = Instant::now();

    let result = (|| -> Result<()> {
        for _ in 0..cfg.epochs {
            state.epoch += 1;
            let mut sum = [0.0; 12];
            for _ in 0..steps {
                let losses = train_step(&mut state, source)?;
                let row = HistoryRow {
                    step: state.step,
                    epoch: state.epoch,
                    losses,
                };
                if let Some((w, p)) = &mut history_file {
                    writeln!(w, "{}", row.to_csv()).map_err(|e| Error::io(p.as_path(), e))?;
                }
                for (s, v) in sum.iter_mut().zip(losses.values()) {
                    *s += v;
                }
                history.push(row);
                if let Some(dir) = &opts.checkpoint_dir {
                    if opts.checkpoint_every > 0 && state.step.is_multiple_of(opts.checkpoint_every)
                    {
                        checkpoints.push(crate::checkpoint::save_state(&state, dir)?);
                    }
                }
            }
            if opts.progress {
                let mean = |i: usize| sum[i] / steps as f64;
                println!(
                    "epoch {} loss_d {:.4} loss_g {:.4} loss_e {:.4} elapsed {:.1}s",
                    state.epoch,
                    mean(9),
                    mean(10),
                    mean(11),
                    started.elapsed().as_secs_f64()
                );
            }
        }
        if let Some(dir) = &opts.checkpoint_dir {
            let already = opts.checkpoint_every > 0
                && state.step > 0
                && state.step.is_multiple_of(opts.checkpoint_every);
            if !already {
                checkpoints.push(crate::checkpoint::save_state(&state, dir)?);
            }
        }
        Ok(())
    })();

    if let Some((mut w, p)) = history_file {
        let flushed = w.flush().map_err(|e| Error::io(p, e));
        result?;
        flushed?;
    } else {
        result?;
    }
    Ok(TrainOutcome {
        state,
        history,
        checkpoints,
    })
}
