//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Pass criterion numbers as arguments to run a subset:
//!
//! cargo test --test acceptance -- 1 2 3

mod common;

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use maven::config::parse_config;
use maven::data::{
    make_glyphs, make_toy_ring, mask_labels, modes_covered, ring_centers, Split, GLYPH_CLASSES,
};
use maven::ensemble::{EnsembleConfig, EnsembleMode};
use maven::evaluation::predict;
use maven::experiment::{ring_scale, run_experiment, sweep, RunOptions};
use maven::losses;
use maven::metrics::{
    accuracy, compute_ddd, compute_fid, compute_moment_summary, confusion_counts, ddd_from_deltas,
    f1_per_class, f1_score, GaussianStats, DEFAULT_DDD_WEIGHTS,
};
use maven::networks::{Backbone, EncoderOutput, Network, NetworkConfig};
use maven::training::{
    discriminator_objective, encoder_objective, generator_objective, train, train_step,
    train_step_observed, DiscriminatorBatch, Feedback, GeneratorBatch, ModelConfig, ModelKind,
    ModelState, Phase, StreamSource, TrainOptions, TrainingConfig,
};
use maven::ImageShape;
use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// 1. Metric oracles.
fn metric_oracles() -> Check {
    let mut r = rng(1);
    for case in 0..1000 {
        let n = r.random_range(2..=10);
        let len = r.random_range(1..=200);
        let labels: Vec<usize> = (0..len).map(|_| r.random_range(0..n)).collect();
        let preds: Vec<usize> = (0..len).map(|_| r.random_range(0..n)).collect();
        let got = f1_per_class(&confusion_counts(&preds, &labels, n).map_err(e2s)?);
        let want = brute_force_f1(&preds, &labels, n);
        ensure(got == want, || {
            format!("case {case}: f1 {got:?} != {want:?}")
        })?;
        let acc = accuracy(&preds, &labels).map_err(e2s)?;
        let want = brute_force_accuracy(&preds, &labels);
        ensure(acc == want, || {
            format!("case {case}: accuracy {acc} != {want}")
        })?;
    }
    let f = f1_score(8, 2, 4);
    ensure((f - 0.7273).abs() <= 1e-4, || {
        format!("TP=8/FP=2/FN=4 gave {f}")
    })?;
    Ok(format!("1000 random sets exact; TP=8/FP=2/FN=4 -> {f:.4}"))
}

fn stats(mean: &[f64], var: &[f64]) -> GaussianStats {
    GaussianStats {
        mean: DVector::from_column_slice(mean),
        covariance: DMatrix::from_diagonal(&DVector::from_column_slice(var)),
    }
}

// 2. FID closed forms.
fn fid_closed_form() -> Check {
    let mut r = rng(2);
    let a = Array2::from_shape_simple_fn((200, 5), || r.sample::<f64, _>(StandardNormal));
    let sa = maven::metrics::compute_gaussian_stats(&a).map_err(e2s)?;
    let same = compute_fid(&sa, &sa).map_err(e2s)?;
    ensure(same.abs() <= 1e-6, || format!("FID(A,A) = {same}"))?;
    let shift = compute_fid(&stats(&[0.0], &[1.0]), &stats(&[1.0], &[1.0])).map_err(e2s)?;
    ensure((shift - 1.0).abs() <= 1e-9, || {
        format!("mean shift gave {shift}")
    })?;
    let gap = compute_fid(&stats(&[0.0], &[4.0]), &stats(&[0.0], &[1.0])).map_err(e2s)?;
    ensure((gap - 1.0).abs() <= 1e-9, || {
        format!("variance gap gave {gap}")
    })?;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = r.random_range(1..=8);
        let draw = |r: &mut ChaCha8Rng, lo: f64, hi: f64| {
            (0..d).map(|_| r.random_range(lo..hi)).collect::<Vec<_>>()
        };
        let (ma, mb) = (draw(&mut r, -3.0, 3.0), draw(&mut r, -3.0, 3.0));
        let (va, vb) = (draw(&mut r, 0.05, 5.0), draw(&mut r, 0.05, 5.0));
        let got = compute_fid(&stats(&ma, &va), &stats(&mb, &vb)).map_err(e2s)?;
        let want = fid_diagonal(&ma, &va, &mb, &vb);
        let err = (got - want).abs();
        worst = worst.max(err);
        ensure(err <= 1e-8, || {
            format!("case {case}: {got} vs closed form {want}")
        })?;
    }
    Ok(format!(
        "FID(A,A)={same:.1e}; 1-D cases exact to 1e-9; 100 diagonal cases max err {worst:.1e}"
    ))
}

// 3. DDD properties.
fn ddd_properties() -> Check {
    let mut r = rng(3);
    let samples: Vec<f64> = (0..500).map(|_| r.random_range(-1.0..1.0)).collect();
    let m = compute_moment_summary(&samples).map_err(e2s)?;
    let same = compute_ddd(&m, &m, &DEFAULT_DDD_WEIGHTS).map_err(e2s)?;
    ensure(same == 0.0, || format!("DDD(A,A) = {same}"))?;
    let eq = ddd_from_deltas(&[0.1; 4], &[0.25; 4]).map_err(e2s)?;
    ensure((eq - 0.5545).abs() <= 1e-4, || {
        format!("equal-weight example gave {eq}")
    })?;
    let first = ddd_from_deltas(&[0.1, 0.0, 0.0, 0.0], &DEFAULT_DDD_WEIGHTS).map_err(e2s)?;
    ensure((first - 0.0916).abs() <= 1e-4, || {
        format!("first-moment example gave {first}")
    })?;
    for pair in 0..1000 {
        let w = {
            let raw: [f64; 4] = std::array::from_fn(|_| r.random_range(0.05..1.0));
            let s: f64 = raw.iter().sum();
            raw.map(|v| v / s)
        };
        let base: [f64; 4] = std::array::from_fn(|_| r.random_range(-2.0..2.0));
        let i = r.random_range(0..4);
        let mut bigger = base;
        bigger[i] = base[i].signum() * (base[i].abs() + r.random_range(1e-3..1.0));
        let (lo, hi) = (
            ddd_from_deltas(&base, &w).map_err(e2s)?,
            ddd_from_deltas(&bigger, &w).map_err(e2s)?,
        );
        ensure(hi > lo, || {
            format!("pair {pair}: |delta_{i}| grew but DDD went {lo} -> {hi}")
        })?;

        // Same property through the moments: move one fake moment away from
        // the real one.
        let real = maven::metrics::MomentSummary {
            m1: r.random_range(-1.0..1.0),
            m2: r.random_range(0.1..2.0),
            m3: r.random_range(-1.0..1.0),
            m4: r.random_range(-1.0..3.0),
            count: 100,
        };
        let step = r.random_range(1e-3..1.0);
        let dir = if r.random_bool(0.5) { 1.0 } else { -1.0 };
        let mut near = real;
        let mut far = real;
        let off = r.random_range(0.0..1.0);
        let set = |s: &mut maven::metrics::MomentSummary, v: f64| match i {
            0 => s.m1 += v,
            1 => s.m2 += v,
            2 => s.m3 += v,
            _ => s.m4 += v,
        };
        set(&mut near, dir * off);
        set(&mut far, dir * (off + step));
        let (a, b) = (
            compute_ddd(&real, &near, &w).map_err(e2s)?,
            compute_ddd(&real, &far, &w).map_err(e2s)?,
        );
        ensure(b > a, || {
            format!("pair {pair}: moment {i} moved away but DDD went {a} -> {b}")
        })?;
    }
    Ok(format!(
        "DDD(A,A)=0; equal weights {eq:.4}; 1000 perturbation pairs monotone"
    ))
}

fn assert_small(name: &str, err: f64, report: &mut Vec<String>) -> Result<(), String> {
    report.push(format!("{name} {err:.1e}"));
    ensure(err < 1e-4, || {
        format!("{name}: max relative error {err:.3e}")
    })
}

fn check_budget<N: Network>(name: &str, net: &N) -> Result<(), String> {
    let p = net.num_params();
    ensure(p <= 500, || format!("{name} has {p} parameters"))
}

// 4. Loss and gradient suite.
fn gradient_suite() -> Check {
    let mut report = Vec::new();

    // Loss functions against their direct inputs.
    let logits = uniform(6, 4, -2.0, 2.0, 40);
    let labels = [0, 2, 1, 1, 0, 2];
    let sup = |l: &Array2<f64>| losses::d_supervised_loss(&probs(l), &labels).unwrap();
    let p = probs(&logits);
    let g = losses::softmax_backward(
        &p,
        &losses::d_supervised_loss_with_grad(&p, &labels)
            .map_err(e2s)?
            .grad,
    );
    assert_small("supervised", fd_array(&logits, &g, sup), &mut report)?;
    let g = losses::softmax_backward(&p, &losses::d_real_loss_with_grad(&p).map_err(e2s)?.grad);
    assert_small(
        "real",
        fd_array(&logits, &g, |l| losses::d_real_loss(&probs(l)).unwrap()),
        &mut report,
    )?;
    let g = losses::softmax_backward(&p, &losses::d_fake_loss_with_grad(&p).map_err(e2s)?.grad);
    assert_small(
        "fake",
        fd_array(&logits, &g, |l| losses::d_fake_loss(&probs(l)).unwrap()),
        &mut report,
    )?;

    let pf = uniform(1, 7, 0.05, 0.95, 41);
    let lg = losses::g_adversarial_loss_with_grad(pf.row(0)).map_err(e2s)?;
    let grad = lg.grad.clone().insert_axis(ndarray::Axis(0));
    let err = fd_array(&pf, &grad, |x| {
        losses::g_adversarial_loss(x.row(0)).unwrap()
    });
    assert_small("g_adversarial", err, &mut report)?;

    let (fr, ff) = (uniform(5, 3, -1.0, 1.0, 42), uniform(4, 3, -1.0, 1.0, 43));
    let fm = losses::feature_matching_loss_with_grad(&fr, &ff).map_err(e2s)?;
    let err_r = fd_array(&fr, &fm.grad.real, |x| {
        losses::feature_matching_loss(x, &ff).unwrap()
    });
    let err_f = fd_array(&ff, &fm.grad.fake, |x| {
        losses::feature_matching_loss(&fr, x).unwrap()
    });
    assert_small("feature_matching", err_r.max(err_f), &mut report)?;

    let post = EncoderOutput {
        mu: uniform(4, 3, -1.5, 1.5, 44),
        log_sigma_sq: uniform(4, 3, -2.0, 1.0, 45),
    };
    let kl = losses::kl_loss_with_grad(&post).map_err(e2s)?;
    let err_m = fd_array(&post.mu, &kl.grad.mu, |m| {
        losses::kl_loss(&EncoderOutput {
            mu: m.clone(),
            log_sigma_sq: post.log_sigma_sq.clone(),
        })
        .unwrap()
    });
    let err_v = fd_array(&post.log_sigma_sq, &kl.grad.log_sigma_sq, |v| {
        losses::kl_loss(&EncoderOutput {
            mu: post.mu.clone(),
            log_sigma_sq: v.clone(),
        })
        .unwrap()
    });
    assert_small("kl", err_m.max(err_v), &mut report)?;

    // The three phase objectives through small networks, dense and conv.
    for (tag, cfg) in [("dense", tiny_dense()), ("conv", tiny_conv())] {
        let mut nets = nets(&cfg, 2, 46);
        check_budget("encoder", &nets.e)?;
        check_budget("generator", &nets.g)?;
        check_budget("discriminator", &nets.ds[0])?;
        let dim = cfg.image_shape.len();
        let b = 4;
        let real = uniform(b, dim, -1.0, 1.0, 47);
        let labeled = uniform(3, dim, -1.0, 1.0, 48);
        let batch = DiscriminatorBatch {
            real: real.clone(),
            labeled,
            labels: vec![1, 0, 1],
            fake1: uniform(b, dim, -1.0, 1.0, 49),
            fake2: Some(uniform(b, dim, -1.0, 1.0, 50)),
        };
        let obj = discriminator_objective(&nets.ds[0], &batch, &mut rng(7)).map_err(e2s)?;
        let err = fd_params(&mut nets.ds[0], &obj.grads, |d| {
            discriminator_objective(d, &batch, &mut rng(7))
                .unwrap()
                .value
        });
        assert_small(&format!("{tag} D objective"), err, &mut report)?;

        let z = uniform(b, cfg.latent_dim, -1.5, 1.5, 51);
        let z_recon = Some(uniform(b, cfg.latent_dim, -1.5, 1.5, 52));
        for (fname, feedback) in [
            ("mean", Feedback::Mean(vec![0.5, 1.5])),
            ("single", Feedback::Single(1)),
        ] {
            let gb = GeneratorBatch {
                real: real.clone(),
                z: z.clone(),
                z_recon: z_recon.clone(),
            };
            let ds = nets.ds.clone();
            let obj =
                generator_objective(&nets.g, &ds, &feedback, &gb, &mut rng(8)).map_err(e2s)?;
            let err = fd_params(&mut nets.g, &obj.grads, |g| {
                generator_objective(g, &ds, &feedback, &gb, &mut rng(8))
                    .unwrap()
                    .value
            });
            assert_small(&format!("{tag} G objective ({fname})"), err, &mut report)?;
        }
        let gb = GeneratorBatch {
            real: real.clone(),
            z: z.clone(),
            z_recon: None,
        };
        let ds1 = vec![nets.ds[0].clone()];
        let fb = Feedback::Mean(vec![1.0]);
        let obj = generator_objective(&nets.g, &ds1, &fb, &gb, &mut rng(9)).map_err(e2s)?;
        let err = fd_params(&mut nets.g, &obj.grads, |g| {
            generator_objective(g, &ds1, &fb, &gb, &mut rng(9))
                .unwrap()
                .value
        });
        assert_small(&format!("{tag} G objective (no encoder)"), err, &mut report)?;

        let eps = uniform(b, cfg.latent_dim, -1.5, 1.5, 53);
        let fb = Feedback::Mean(vec![1.0, 1.0]);
        let (g, ds) = (nets.g.clone(), nets.ds.clone());
        let obj =
            encoder_objective(&nets.e, &g, &ds, &fb, &real, &eps, &mut rng(10)).map_err(e2s)?;
        let err = fd_params(&mut nets.e, &obj.grads, |e| {
            encoder_objective(e, &g, &ds, &fb, &real, &eps, &mut rng(10))
                .unwrap()
                .value
        });
        assert_small(&format!("{tag} E objective"), err, &mut report)?;
    }

    // Closed-form KL against Monte Carlo.
    let mut r = rng(11);
    let n = 100_000;
    for case in 0..20 {
        let d = r.random_range(1..=4);
        let mu: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let lv: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..1.0)).collect();
        let closed = losses::kl_loss(&EncoderOutput {
            mu: Array2::from_shape_vec((1, d), mu.clone()).unwrap(),
            log_sigma_sq: Array2::from_shape_vec((1, d), lv.clone()).unwrap(),
        })
        .map_err(e2s)?;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let mut log_ratio = 0.0;
            for j in 0..d {
                let e: f64 = StandardNormal.sample(&mut r);
                let zz = mu[j] + (0.5 * lv[j]).exp() * e;
                // ln q(z) - ln p(z); the 2*pi terms cancel.
                log_ratio += -0.5 * lv[j] - 0.5 * e * e + 0.5 * zz * zz;
            }
            sum += log_ratio;
            sum_sq += log_ratio * log_ratio;
        }
        let mean = sum / n as f64;
        let se = ((sum_sq / n as f64 - mean * mean) * n as f64 / (n as f64 - 1.0)).sqrt()
            / (n as f64).sqrt();
        ensure((mean - closed).abs() <= 3.0 * se, || {
            format!("posterior {case}: closed {closed} vs Monte Carlo {mean} (se {se})")
        })?;
    }
    report.push("KL vs Monte Carlo 20/20 within 3 SE".into());
    Ok(report.join("; "))
}

fn glyph_view(per_class: usize, seed: u64) -> maven::Result<maven::data::SemiSupervisedView> {
    let split = Arc::new(make_glyphs(per_class, 16, 0.1, seed, Split::Train)?);
    mask_labels(split, 0.2, seed)
}

fn small_glyph_net() -> NetworkConfig {
    NetworkConfig {
        latent_dim: 8,
        backbone: Backbone::Conv {
            channels: vec![4, 8],
        },
        ..NetworkConfig::conv(ImageShape::new(16, 16, 1), GLYPH_CLASSES.len())
    }
}

// 5. K=1 equivalence.
fn k1_equivalence() -> Check {
    let view = glyph_view(8, 5).map_err(e2s)?;
    let cfg = TrainingConfig {
        batch_size: 16,
        seed: 5,
        ..TrainingConfig::default()
    };
    let net = small_glyph_net();
    let mut maven_state = ModelState::new(
        ModelConfig::maven(net.clone(), EnsembleConfig::uniform(1, EnsembleMode::Mean)),
        &cfg,
        5,
    )
    .map_err(e2s)?;
    let mut vae_state =
        ModelState::new(ModelConfig::baseline(ModelKind::VaeGan, net), &cfg, 5).map_err(e2s)?;
    let mut src_a = StreamSource::new(&view, 16, 5).map_err(e2s)?;
    let mut src_b = StreamSource::new(&view, 16, 5).map_err(e2s)?;
    let mut worst: f64 = 0.0;
    for step in 0..50 {
        train_step(&mut maven_state, &mut src_a).map_err(e2s)?;
        train_step(&mut vae_state, &mut src_b).map_err(e2s)?;
        let pairs = [
            (
                maven_state.generator.param_vector(),
                vae_state.generator.param_vector(),
            ),
            (
                maven_state.discriminators[0].param_vector(),
                vae_state.discriminators[0].param_vector(),
            ),
            (
                maven_state.encoder.as_ref().unwrap().param_vector(),
                vae_state.encoder.as_ref().unwrap().param_vector(),
            ),
        ];
        for (a, b) in pairs {
            for (x, y) in a.iter().zip(&b) {
                worst = worst.max((x - y).abs());
            }
        }
        ensure(worst <= 1e-6, || {
            format!("step {step}: trajectories differ by {worst}")
        })?;
    }
    Ok(format!("50 steps, max parameter difference {worst:.1e}"))
}

// 6. Freeze contract.
fn freeze_contract() -> Check {
    let view = glyph_view(8, 6).map_err(e2s)?;
    let cfg = TrainingConfig {
        batch_size: 16,
        seed: 6,
        ..TrainingConfig::default()
    };
    let mut checked = 0;
    for mode in [EnsembleMode::Mean, EnsembleMode::Random] {
        let model = ModelConfig::maven(small_glyph_net(), EnsembleConfig::uniform(3, mode));
        let mut state = ModelState::new(model, &cfg, 6).map_err(e2s)?;
        let mut src = StreamSource::new(&view, 16, 6).map_err(e2s)?;
        for step in 0..20 {
            let snap = |s: &ModelState| {
                (
                    snapshot(s.encoder.as_ref().unwrap()),
                    snapshot(&s.generator),
                    s.discriminators.iter().map(snapshot).collect::<Vec<_>>(),
                )
            };
            let mut prev = snap(&state);
            let mut failure: Option<String> = None;
            train_step_observed(&mut state, &mut src, |phase, s| {
                let now = snap(s);
                let frozen_ok = match phase {
                    Phase::Discriminator(k) => {
                        now.0 == prev.0
                            && now.1 == prev.1
                            && (0..now.2.len()).all(|j| j == k || now.2[j] == prev.2[j])
                            && now.2[k] != prev.2[k]
                    }
                    Phase::Generator => now.0 == prev.0 && now.2 == prev.2 && now.1 != prev.1,
                    Phase::Encoder => now.1 == prev.1 && now.2 == prev.2 && now.0 != prev.0,
                };
                if !frozen_ok && failure.is_none() {
                    failure = Some(format!("{mode} step {step}: contract broken in {phase:?}"));
                }
                checked += 1;
                prev = now;
            })
            .map_err(e2s)?;
            if let Some(f) = failure {
                return Err(f);
            }
        }
    }
    Ok(format!(
        "2 x 20 steps, {checked} phase boundaries bitwise-checked"
    ))
}

fn ring_net() -> NetworkConfig {
    NetworkConfig {
        latent_dim: 8,
        backbone: Backbone::Dense {
            hidden: vec![64, 64],
        },
        dropout_rate: 0.0,
        ..NetworkConfig::dense(ImageShape::new(1, 1, 2), 8)
    }
}

fn ring_modes(model: ModelConfig, seed: u64) -> maven::Result<usize> {
    let (radius, sigma) = (2.0, 0.1);
    let scale = ring_scale(radius, sigma);
    let data = Arc::new(make_toy_ring(8, 250, radius, sigma, seed)?.scaled(scale));
    let view = mask_labels(data, 0.1, seed)?;
    let cfg = TrainingConfig {
        batch_size: 64,
        lr_e: 2e-4,
        seed,
        ..TrainingConfig::default()
    };
    let mut state = ModelState::new(model, &cfg, seed)?;
    let mut src = StreamSource::new(&view, 64, seed)?;
    for _ in 0..2000 {
        train_step(&mut state, &mut src)?;
    }
    let samples = state.sample(2000, &mut ChaCha8Rng::seed_from_u64(seed ^ 0xfeed)) / scale;
    Ok(modes_covered(
        &samples,
        &ring_centers(8, radius),
        radius / 4.0,
        0.02,
    ))
}

fn median(v: &[usize]) -> usize {
    let mut s = v.to_vec();
    s.sort_unstable();
    s[s.len() / 2]
}

// 7. Mode coverage.
fn mode_coverage() -> Check {
    let seeds = 0..5u64;
    let maven_counts = seeds
        .clone()
        .map(|s| {
            ring_modes(
                ModelConfig::maven(ring_net(), EnsembleConfig::uniform(3, EnsembleMode::Mean)),
                s,
            )
        })
        .collect::<maven::Result<Vec<_>>>()
        .map_err(e2s)?;
    let gan_counts = seeds
        .map(|s| ring_modes(ModelConfig::baseline(ModelKind::DcGan, ring_net()), s))
        .collect::<maven::Result<Vec<_>>>()
        .map_err(e2s)?;
    let good = maven_counts.iter().filter(|&&c| c >= 7).count();
    let detail = format!("MAVEN-mean K=3 modes {maven_counts:?}, DC-GAN {gan_counts:?}");
    ensure(good >= 4, || {
        format!("{detail}: only {good}/5 seeds reach 7 modes")
    })?;
    ensure(median(&maven_counts) >= median(&gan_counts), || {
        format!("{detail}: median below DC-GAN")
    })?;
    Ok(detail)
}

// 8. Semi-supervised smoke.
fn semi_supervised() -> Check {
    let mut accs = Vec::new();
    for seed in 0..5u64 {
        let train_set = Arc::new(make_glyphs(200, 16, 0.1, seed, Split::Train).map_err(e2s)?);
        let test_set = make_glyphs(50, 16, 0.1, seed + 1000, Split::Test).map_err(e2s)?;
        let view = mask_labels(train_set.clone(), 0.1, seed).map_err(e2s)?;
        let cfg = TrainingConfig {
            samples_per_epoch: train_set.len(),
            batch_size: 64,
            epochs: 30,
            seed,
            ..TrainingConfig::default()
        };
        let net = NetworkConfig {
            latent_dim: 16,
            backbone: Backbone::Conv {
                channels: vec![8, 16],
            },
            ..NetworkConfig::conv(train_set.shape(), GLYPH_CLASSES.len())
        };
        let model = ModelConfig::maven(net, EnsembleConfig::uniform(2, EnsembleMode::Mean));
        let out = train(&view, model, &cfg, &TrainOptions::default()).map_err(e2s)?;
        let preds = predict(&out.state, &test_set.rows().to_owned()).map_err(e2s)?;
        accs.push(accuracy(&preds, test_set.labels()).map_err(e2s)?);
    }
    let good = accs.iter().filter(|&&a| a > 0.30).count();
    let detail = format!(
        "2000 glyphs, 10% labels, 30 epochs, MAVEN-mean K=2 accuracies {:?}",
        accs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>()
    );
    ensure(good >= 4, || format!("{detail}: only {good}/5 above 0.30"))?;
    Ok(detail)
}

const DETERMINISM_CONFIG: &str = "model = maven
ensemble.k = 2
dataset.kind = glyphs
dataset.samples_per_class = 12
dataset.test_samples_per_class = 4
network.channels = 4, 8
network.latent_dim = 8
train.batch_size = 16
train.epochs = 2
eval.fid_repeats = 2
repeats = 2
";

// 9. Determinism.
fn determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let mut outputs = Vec::new();
    for run in 0..2 {
        let mut cfg = parse_config(DETERMINISM_CONFIG, tmp.path()).map_err(e2s)?;
        cfg.output_dir = tmp.path().join(format!("run{run}"));
        run_experiment(&cfg, &RunOptions::default()).map_err(e2s)?;
        let read = |p: &Path| fs::read(cfg.output_dir.join(p)).map_err(e2s);
        outputs.push([
            read(Path::new("repeat-00/history.csv"))?,
            read(Path::new("repeat-01/history.csv"))?,
            read(Path::new("table_generation.csv"))?,
            read(Path::new("table_classification.csv"))?,
        ]);
    }
    for (i, name) in [
        "history 0",
        "history 1",
        "generation table",
        "classification table",
    ]
    .iter()
    .enumerate()
    {
        ensure(outputs[0][i] == outputs[1][i], || {
            format!("{name} differs between runs")
        })?;
    }
    Ok("history and aggregate CSVs byte-identical across two runs".into())
}

// 10. Documentation of the published numbers, and table structure from a sweep.
fn documentation() -> Check {
    let readme = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../README.md");
    let text = fs::read_to_string(&readme).map_err(|e| format!("{}: {e}", readme.display()))?;
    for needle in ["0.909", "11.316", "0.525"] {
        ensure(text.contains(needle), || {
            format!("README does not reprint {needle}")
        })?;
    }
    ensure(text.to_lowercase().contains("not reproducible"), || {
        "README lacks the not-reproducible disclaimer".into()
    })?;
    let tmp = tempfile::tempdir().map_err(e2s)?;
    let mut cfg = parse_config(
        "model = maven\ndataset.kind = glyphs\ndataset.samples_per_class = 6\ndataset.test_samples_per_class = 2\n\
         network.channels = 4\nnetwork.latent_dim = 4\ntrain.batch_size = 8\ntrain.epochs = 0\n\
         eval.fid_repeats = 2\nrepeats = 1\nsweep.k = 2, 3, 5\n",
        tmp.path(),
    )
    .map_err(e2s)?;
    cfg.output_dir = tmp.path().join("sweep");
    sweep(&cfg, &RunOptions::default()).map_err(e2s)?;
    let generation =
        fs::read_to_string(cfg.output_dir.join("table_generation.csv")).map_err(e2s)?;
    let classification =
        fs::read_to_string(cfg.output_dir.join("table_classification.csv")).map_err(e2s)?;
    let rows: Vec<&str> = generation
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap_or(""))
        .collect();
    let want = [
        "DC-GAN",
        "VAE-GAN",
        "MAVEN-mean (K=2)",
        "MAVEN-mean (K=3)",
        "MAVEN-mean (K=5)",
        "MAVEN-rand (K=2)",
        "MAVEN-rand (K=3)",
        "MAVEN-rand (K=5)",
    ];
    ensure(rows == want, || format!("generation table rows {rows:?}"))?;
    let header = classification.lines().next().unwrap_or("");
    let cols = header.split(',').count();
    ensure(cols == 3 + GLYPH_CLASSES.len(), || {
        format!("classification header {header:?}")
    })?;
    Ok("README reprints published values with disclaimer; sweep emits 8-row tables".into())
}

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Check,
}

fn main() {
    let criteria = [
        Criterion {
            id: 1,
            name: "metric oracles",
            budget: Some(Duration::from_secs(10)),
            run: metric_oracles,
        },
        Criterion {
            id: 2,
            name: "FID closed form",
            budget: Some(Duration::from_secs(30)),
            run: fid_closed_form,
        },
        Criterion {
            id: 3,
            name: "DDD properties",
            budget: Some(Duration::from_secs(10)),
            run: ddd_properties,
        },
        Criterion {
            id: 4,
            name: "loss/gradient suite",
            budget: Some(Duration::from_secs(120)),
            run: gradient_suite,
        },
        Criterion {
            id: 5,
            name: "K=1 equivalence",
            budget: None,
            run: k1_equivalence,
        },
        Criterion {
            id: 6,
            name: "freeze contract",
            budget: None,
            run: freeze_contract,
        },
        Criterion {
            id: 7,
            name: "mode coverage",
            budget: Some(Duration::from_secs(600)),
            run: mode_coverage,
        },
        Criterion {
            id: 8,
            name: "semi-supervised smoke",
            budget: Some(Duration::from_secs(900)),
            run: semi_supervised,
        },
        Criterion {
            id: 9,
            name: "determinism",
            budget: None,
            run: determinism,
        },
        Criterion {
            id: 10,
            name: "published-number disclaimer",
            budget: None,
            run: documentation,
        },
    ];
    let only: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for c in criteria
        .iter()
        .filter(|c| only.is_empty() || only.contains(&c.id))
    {
        let t = Instant::now();
        let outcome = (c.run)();
        let elapsed = t.elapsed();
        let outcome = match (outcome, c.budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!(
                "took {:.1}s, budget {}s",
                elapsed.as_secs_f64(),
                b.as_secs()
            )),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!(
                "PASS {:>2} {}: {detail} ({:.1}s)",
                c.id,
                c.name,
                elapsed.as_secs_f64()
            ),
            Err(why) => {
                failed += 1;
                println!(
                    "FAIL {:>2} {}: {why} ({:.1}s)",
                    c.id,
                    c.name,
                    elapsed.as_secs_f64()
                );
            }
        }
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
