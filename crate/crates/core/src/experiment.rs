//! Repeated-seed experiments and the model-grid sweep.
//!
//! A run trains one model per repeat (seed `train.seed + r`), scores it, and
//! writes per-repeat JSON reports, density histograms and two aggregate CSV
//! tables: generation quality (`table_generation.csv`: model, FID, DDD) and
//! classification (`table_classification.csv`: model, accuracy, F1 per class).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSpec, ExperimentConfig, NetworkSpec};
use crate::data::{self, mask_labels, DatasetSplit, Split};
use crate::ensemble::{EnsembleConfig, EnsembleMode};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, RealReference};
use crate::histogram::emit_density_histogram;
use crate::metrics::{mean_std, MetricReport};
use crate::networks::{Backbone, NetworkConfig};
use crate::training::{train, ModelConfig, ModelKind, TrainOptions, TrainingConfig};

/// Environment variable naming the output root; `--out` takes precedence.
pub const OUT_DIR_ENV: &str = "MAVEN_OUT_DIR";

/// Training and test splits, both in `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct Datasets {
    pub train: Arc<DatasetSplit>,
    pub test: Arc<DatasetSplit>,
}

fn subset(split: DatasetSplit, limit: Option<usize>, seed: u64) -> Result<DatasetSplit> {
    let Some(limit) = limit.filter(|&l| l < split.len()) else {
        return Ok(split);
    };
    let mut idx: Vec<usize> = (0..split.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(limit);
    idx.sort_unstable();
    let shape = split.shape();
    let images = Array4::from_shape_vec(
        (limit, shape.height, shape.width, shape.channels),
        split.gather(&idx).into_raw_vec_and_offset().0,
    )
    .expect("gathered rows");
    let labels = idx.iter().map(|&i| split.labels()[i]).collect();
    DatasetSplit::new(images, labels, split.split, split.class_names.clone())
}

/// Loads the configured dataset.
pub fn load_datasets(cfg: &ExperimentConfig) -> Result<Datasets> {
    let (train, test) = match &cfg.dataset {
        DatasetSpec::Glyphs {
            samples_per_class,
            test_samples_per_class,
            size,
            noise,
            seed,
        } => (
            data::make_glyphs(*samples_per_class, *size, *noise, *seed, Split::Train)?,
            data::make_glyphs(
                *test_samples_per_class,
                *size,
                *noise,
                seed.wrapping_add(1),
                Split::Test,
            )?,
        ),
        DatasetSpec::Ring {
            modes,
            samples_per_mode,
            radius,
            sigma,
            seed,
        } => {
            let scale = ring_scale(*radius, *sigma);
            let train = data::make_toy_ring(*modes, *samples_per_mode, *radius, *sigma, *seed)?
                .scaled(scale);
            let mut test = data::make_toy_ring(
                *modes,
                (*samples_per_mode / 4).max(1),
                *radius,
                *sigma,
                seed.wrapping_add(1),
            )?
            .scaled(scale);
            test.split = Split::Test;
            (train, test)
        }
        DatasetSpec::Folder {
            train,
            test,
            image_size,
            channels,
        } => (
            data::load_image_folder(train, *image_size, *channels, Split::Train)?,
            data::load_image_folder(test, *image_size, *channels, Split::Test)?,
        ),
        DatasetSpec::Cifar10 { dir } => (
            data::load_cifar10(dir, Split::Train)?,
            data::load_cifar10(dir, Split::Test)?,
        ),
        DatasetSpec::Svhn { dir } => (
            data::load_svhn_mat(&dir.join("train_32x32.mat"), Split::Train)?,
            data::load_svhn_mat(&dir.join("test_32x32.mat"), Split::Test)?,
        ),
    };
    if train.class_names.len() != test.class_names.len() || train.shape() != test.shape() {
        return Err(Error::Data(
            "train and test splits disagree on classes or image shape".into(),
        ));
    }
    Ok(Datasets {
        train: Arc::new(subset(train, cfg.train_limit, cfg.training.seed)?),
        test: Arc::new(subset(
            test,
            cfg.test_limit,
            cfg.training.seed.wrapping_add(1),
        )?),
    })
}

/// Factor that maps ring coordinates into `[-1, 1]` with room for the tails.
pub fn ring_scale(radius: f64, sigma: f64) -> f64 {
    1.0 / (radius + 4.0 * sigma).max(f64::MIN_POSITIVE)
}

/// Network configuration for a dataset with the given spec.
pub fn network_config(spec: &NetworkSpec, split: &DatasetSplit) -> Result<NetworkConfig> {
    let shape = split.shape();
    let conv = NetworkConfig {
        latent_dim: spec.latent_dim,
        image_shape: shape,
        n_classes: split.n_classes(),
        backbone: Backbone::Conv {
            channels: spec.channels.clone(),
        },
        leaky_relu_alpha: spec.leaky_relu_alpha,
        dropout_rate: spec.dropout,
    };
    let dense = NetworkConfig {
        backbone: Backbone::Dense {
            hidden: spec.hidden.clone(),
        },
        ..conv.clone()
    };
    let cfg = match spec.backbone.as_deref() {
        Some("conv") => conv,
        Some("dense") => dense,
        _ if conv.validate().is_ok() => conv,
        _ => dense,
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatFailure {
    pub repeat: usize,
    pub seed: u64,
    pub error: String,
}

/// Mean and sample standard deviation over the successful repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub repeats: usize,
    pub fid_mean: f64,
    pub fid_std: f64,
    pub fid_redraw_std: f64,
    pub ddd_mean: f64,
    pub ddd_std: f64,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: Vec<f64>,
    pub f1_std: Vec<f64>,
    pub class_names: Vec<String>,
}

impl Aggregate {
    pub fn from_reports(model: &str, reports: &[MetricReport]) -> Result<Self> {
        if reports.is_empty() {
            return Err(Error::InvalidArgument(
                "no successful repeats to aggregate".into(),
            ));
        }
        let col =
            |f: &dyn Fn(&MetricReport) -> f64| mean_std(&reports.iter().map(f).collect::<Vec<_>>());
        let (fid_mean, fid_std) = col(&|r| r.fid.mean);
        let (fid_redraw_std, _) = col(&|r| r.fid.std);
        let (ddd_mean, ddd_std) = col(&|r| r.ddd);
        let (accuracy_mean, accuracy_std) = col(&|r| r.accuracy);
        let classes = reports[0].f1.len();
        let (f1_mean, f1_std) = (0..classes).map(|c| col(&|r| r.f1[c])).unzip();
        Ok(Self {
            model: model.to_string(),
            repeats: reports.len(),
            fid_mean,
            fid_std,
            fid_redraw_std,
            ddd_mean,
            ddd_std,
            accuracy_mean,
            accuracy_std,
            f1_mean,
            f1_std,
            class_names: reports[0].class_names.clone(),
        })
    }
}

/// Header and row of the generation table.
pub fn generation_table(rows: &[Aggregate]) -> String {
    let mut out = String::from("model,repeats,fid_repeated_seed_mean,fid_repeated_seed_std,fid_redraw_std,ddd_repeated_seed_mean\n");
    for a in rows {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.6}",
            a.model, a.repeats, a.fid_mean, a.fid_std, a.fid_redraw_std, a.ddd_mean
        );
    }
    out
}

/// Header and rows of the classification table.
pub fn classification_table(rows: &[Aggregate]) -> String {
    let mut out = String::from("model,repeats,accuracy_repeated_seed_mean");
    if let Some(first) = rows.first() {
        for name in &first.class_names {
            let _ = write!(out, ",f1_{name}");
        }
    }
    out.push('\n');
    for a in rows {
        let _ = write!(out, "{},{},{:.6}", a.model, a.repeats, a.accuracy_mean);
        for f in &a.f1_mean {
            let _ = write!(out, ",{f:.6}");
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportBundle {
    pub model: String,
    pub reports: Vec<MetricReport>,
    pub failures: Vec<RepeatFailure>,
    pub aggregate: Option<Aggregate>,
    pub files: Vec<PathBuf>,
}

impl ReportBundle {
    pub fn succeeded(&self) -> bool {
        !self.reports.is_empty()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub overwrite: bool,
    pub progress: bool,
}

fn prepare_dir(dir: &Path, overwrite: bool) -> Result<()> {
    if dir.exists() {
        let non_empty = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .next()
            .is_some();
        if non_empty && !overwrite {
            return Err(Error::Config(format!(
                "output directory {} already exists; pass --overwrite to replace it",
                dir.display()
            )));
        }
        if non_empty {
            fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    files.push(path.to_path_buf());
    Ok(())
}

/// Model and training configuration for one repeat.
pub fn resolve(cfg: &ExperimentConfig, data: &Datasets) -> Result<(ModelConfig, TrainingConfig)> {
    let network = network_config(&cfg.network, &data.train)?;
    let model = ModelConfig {
        kind: cfg.model,
        network,
        ensemble: cfg.ensemble.clone(),
    };
    model.validate()?;
    let mut training = cfg.training.clone();
    training.samples_per_epoch = cfg.samples_per_epoch.unwrap_or(data.train.len());
    training.validate()?;
    Ok((model, training))
}

struct RepeatOutput {
    report: MetricReport,
    files: Vec<PathBuf>,
}

fn run_repeat(
    cfg: &ExperimentConfig,
    data: &Datasets,
    reference: &RealReference,
    repeat: usize,
    dir: &Path,
    opts: &RunOptions,
) -> Result<RepeatOutput> {
    let (model, mut training) = resolve(cfg, data)?;
    training.seed = cfg.training.seed.wrapping_add(repeat as u64);
    let rdir = dir.join(format!("repeat-{repeat:02}"));
    fs::create_dir_all(&rdir).map_err(|e| Error::io(&rdir, e))?;
    let view = mask_labels(data.train.clone(), training.labeled_fraction, training.seed)?;
    let history = rdir.join("history.csv");
    let outcome = train(
        &view,
        model,
        &training,
        &TrainOptions {
            history_path: Some(history.clone()),
            checkpoint_dir: Some(rdir.join("checkpoints")),
            checkpoint_every: cfg.checkpoint_every,
            progress: opts.progress,
        },
    )?;
    let mut files = vec![history];
    for ckpt in &outcome.checkpoints {
        let mut inner: Vec<PathBuf> = fs::read_dir(ckpt)
            .map_err(|e| Error::io(ckpt, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(ckpt, err)))
            .collect::<Result<_>>()?;
        inner.sort();
        files.extend(inner);
    }
    let (report, fake) = evaluate(
        &outcome.state,
        reference,
        &data.test,
        &cfg.eval,
        training.seed,
        repeat,
    )?;
    let fake_projected = cfg.eval.projection.apply(&fake);
    let (_, hist_files) = emit_density_histogram(
        &reference.projected,
        &fake_projected,
        cfg.eval.histogram_bins,
        &rdir.join("density"),
    )?;
    files.extend(hist_files);
    write_file(
        &rdir.join("report.json"),
        &serde_json::to_string_pretty(&report)?,
        &mut files,
    )?;
    Ok(RepeatOutput { report, files })
}

/// Trains and evaluates `cfg.repeats` models, writing everything under
/// `cfg.output_dir`. A failed repeat is recorded and skipped.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ReportBundle> {
    let data = load_datasets(cfg)?;
    let reference = RealReference::new(&data.train, &cfg.eval)?;
    run_with_data(cfg, &data, &reference, opts)
}

fn run_with_data(
    cfg: &ExperimentConfig,
    data: &Datasets,
    reference: &RealReference,
    opts: &RunOptions,
) -> Result<ReportBundle> {
    let dir = &cfg.output_dir;
    prepare_dir(dir, opts.overwrite)?;
    let (model, _) = resolve(cfg, data)?;
    let label = model.label();
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    let mut files = Vec::new();
    for r in 0..cfg.repeats {
        match run_repeat(cfg, data, reference, r, dir, opts) {
            Ok(out) => {
                reports.push(out.report);
                files.extend(out.files);
            }
            Err(e) => {
                log::error!("{label} repeat {r} failed: {e}");
                failures.push(RepeatFailure {
                    repeat: r,
                    seed: cfg.training.seed.wrapping_add(r as u64),
                    error: e.to_string(),
                });
            }
        }
    }
    let aggregate = if reports.is_empty() {
        None
    } else {
        Some(Aggregate::from_reports(&label, &reports)?)
    };
    if let Some(a) = &aggregate {
        let rows = std::slice::from_ref(a);
        write_file(
            &dir.join("table_generation.csv"),
            &generation_table(rows),
            &mut files,
        )?;
        write_file(
            &dir.join("table_classification.csv"),
            &classification_table(rows),
            &mut files,
        )?;
    }
    let mut bundle = ReportBundle {
        model: label,
        reports,
        failures,
        aggregate,
        files,
    };
    let summary = dir.join("bundle.json");
    bundle.files.push(summary.clone());
    fs::write(&summary, serde_json::to_string_pretty(&bundle)?)
        .map_err(|e| Error::io(&summary, e))?;
    Ok(bundle)
}

/// The eight-row comparison grid: DC-GAN, VAE-GAN, then MAVEN in mean and
/// random mode for each ensemble size.
pub fn model_grid(ks: &[usize]) -> Vec<(ModelKind, EnsembleConfig)> {
    let mut grid = vec![
        (
            ModelKind::DcGan,
            EnsembleConfig::uniform(1, EnsembleMode::Mean),
        ),
        (
            ModelKind::VaeGan,
            EnsembleConfig::uniform(1, EnsembleMode::Mean),
        ),
    ];
    for mode in [EnsembleMode::Mean, EnsembleMode::Random] {
        for &k in ks {
            grid.push((ModelKind::Maven, EnsembleConfig::uniform(k, mode)));
        }
    }
    grid
}

fn slug(model: ModelKind, ens: &EnsembleConfig) -> String {
    match model {
        ModelKind::Maven => format!("maven-{}-k{}", ens.mode, ens.k),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub bundles: Vec<ReportBundle>,
    pub files: Vec<PathBuf>,
}

/// Runs the model grid on one dataset; each row gets its own subdirectory
/// and the combined tables are written at the top level.
pub fn sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<SweepResult> {
    let data = load_datasets(cfg)?;
    let reference = RealReference::new(&data.train, &cfg.eval)?;
    prepare_dir(&cfg.output_dir, opts.overwrite)?;
    let mut bundles = Vec::new();
    for (model, ensemble) in model_grid(&cfg.sweep_k) {
        let mut row = cfg.clone();
        row.model = model;
        row.ensemble = ensemble;
        row.output_dir = cfg.output_dir.join(slug(model, &row.ensemble));
        if opts.progress {
            println!("== {}", slug(model, &row.ensemble));
        }
        bundles.push(run_with_data(&row, &data, &reference, opts)?);
    }
    let rows: Vec<Aggregate> = bundles.iter().filter_map(|b| b.aggregate.clone()).collect();
    let mut files = Vec::new();
    write_file(
        &cfg.output_dir.join("table_generation.csv"),
        &generation_table(&rows),
        &mut files,
    )?;
    write_file(
        &cfg.output_dir.join("table_classification.csv"),
        &classification_table(&rows),
        &mut files,
    )?;
    Ok(SweepResult { bundles, files })
}
