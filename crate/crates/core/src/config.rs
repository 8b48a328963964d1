//! Experiment configuration: a flat `key = value` text file with `#`
//! comments. Every key is validated; unknown keys are errors.
//!
//! ```text
//! model = maven
//! ensemble.k = 3
//! ensemble.mode = mean
//! dataset.kind = glyphs
//! train.epochs = 5
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleConfig, EnsembleMode};
use crate::error::Error;
use crate::evaluation::EvalConfig;
use crate::metrics::Projection;
use crate::training::{ModelKind, TrainingConfig};

/// Where the images come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    /// Synthetic ten-class glyphs.
    Glyphs {
        samples_per_class: usize,
        test_samples_per_class: usize,
        size: usize,
        noise: f64,
        seed: u64,
    },
    /// Gaussian mixture on a ring, rescaled into `[-1, 1]`.
    Ring {
        modes: usize,
        samples_per_mode: usize,
        radius: f64,
        sigma: f64,
        seed: u64,
    },
    /// `root/<class>/<image>` folders for the train and test splits.
    Folder {
        train: PathBuf,
        test: PathBuf,
        image_size: usize,
        channels: usize,
    },
    /// Extracted `cifar-10-batches-bin` directory.
    Cifar10 { dir: PathBuf },
    /// Directory holding `train_32x32.mat` and `test_32x32.mat`.
    Svhn { dir: PathBuf },
}

/// Network settings not implied by the dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// `conv` or `dense`; when absent, conv if the image shape allows it.
    pub backbone: Option<String>,
    pub channels: Vec<usize>,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub leaky_relu_alpha: f64,
    pub dropout: f64,
}

impl Default for NetworkSpec {
    fn default() -> Self {
        Self {
            backbone: None,
            channels: vec![32, 64],
            hidden: vec![128, 128],
            latent_dim: 100,
            leaky_relu_alpha: 0.2,
            dropout: 0.4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub ensemble: EnsembleConfig,
    pub dataset: DatasetSpec,
    /// Optional cap on training items (a seeded subset).
    pub train_limit: Option<usize>,
    /// Optional cap on test items.
    pub test_limit: Option<usize>,
    pub network: NetworkSpec,
    pub training: TrainingConfig,
    /// `None` means one pass over the training set per epoch.
    pub samples_per_epoch: Option<usize>,
    pub checkpoint_every: usize,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
    pub repeats: usize,
    /// Ensemble sizes used by the sweep grid.
    pub sweep_k: Vec<usize>,
}

/// One problem found while validating a config file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigIssue {
    pub line: Option<usize>,
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}: {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<ConfigIssue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        f.write_str(&lines.join("\n"))
    }
}

impl std::error::Error for ConfigErrors {}

impl From<ConfigErrors> for Error {
    fn from(e: ConfigErrors) -> Self {
        Error::Config(e.to_string())
    }
}

const KEYS: &[&str] = &[
    "model",
    "repeats",
    "ensemble.k",
    "ensemble.mode",
    "ensemble.weights",
    "dataset.kind",
    "dataset.path",
    "dataset.test_path",
    "dataset.image_size",
    "dataset.channels",
    "dataset.samples_per_class",
    "dataset.test_samples_per_class",
    "dataset.size",
    "dataset.noise",
    "dataset.modes",
    "dataset.samples_per_mode",
    "dataset.radius",
    "dataset.sigma",
    "dataset.seed",
    "dataset.train_limit",
    "dataset.test_limit",
    "network.backbone",
    "network.channels",
    "network.hidden",
    "network.latent_dim",
    "network.leaky_relu_alpha",
    "network.dropout",
    "train.samples_per_epoch",
    "train.batch_size",
    "train.epochs",
    "train.labeled_fraction",
    "train.lr_g",
    "train.lr_d",
    "train.lr_e",
    "train.adam_beta1",
    "train.seed",
    "train.checkpoint_every",
    "eval.generated",
    "eval.fid_repeats",
    "eval.ddd_weights",
    "eval.projection",
    "eval.embedder_seed",
    "eval.histogram_bins",
    "output.dir",
    "sweep.k",
];

const ENCODER_KEYS: &[&str] = &["train.lr_e"];

struct Parser {
    values: BTreeMap<String, (usize, String)>,
    issues: Vec<ConfigIssue>,
    base: PathBuf,
}

impl Parser {
    fn issue(&mut self, line: Option<usize>, key: &str, message: impl Into<String>) {
        self.issues.push(ConfigIssue {
            line,
            key: key.to_string(),
            message: message.into(),
        });
    }

    fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    fn get<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: fmt::Display,
    {
        self.opt(key).unwrap_or(default)
    }

    fn opt<T: FromStr>(&mut self, key: &str) -> Option<T>
    where
        T::Err: fmt::Display,
    {
        let (line, raw) = self.values.get(key)?.clone();
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(e) => {
                self.issue(Some(line), key, format!("cannot parse {raw:?}: {e}"));
                None
            }
        }
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Option<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        let (line, raw) = self.values.get(key)?.clone();
        let mut out = Vec::new();
        for part in raw.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part.parse::<T>() {
                Ok(v) => out.push(v),
                Err(e) => {
                    self.issue(
                        Some(line),
                        key,
                        format!("cannot parse list item {part:?}: {e}"),
                    );
                    return None;
                }
            }
        }
        Some(out)
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        let (line, raw) = self.values.get(key)?.clone();
        let p = PathBuf::from(&raw);
        let p = if p.is_absolute() {
            p
        } else {
            self.base.join(p)
        };
        if !p.exists() {
            self.issue(
                Some(line),
                key,
                format!("path {} does not exist", p.display()),
            );
        }
        Some(p)
    }

    fn require_path(&mut self, key: &str, kind: &str) -> PathBuf {
        match self.path(key) {
            Some(p) => p,
            None => {
                self.issue(None, key, format!("required for dataset.kind = {kind}"));
                PathBuf::new()
            }
        }
    }

    fn line_of(&self, key: &str) -> Option<usize> {
        self.values.get(key).map(|(l, _)| *l)
    }
}

/// Parses config text. Relative paths resolve against `base`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig, ConfigErrors> {
    let mut p = Parser {
        values: BTreeMap::new(),
        issues: Vec::new(),
        base: base.to_path_buf(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            p.issue(Some(line), content, "expected `key = value`");
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            p.issue(Some(line), key, "unknown key");
            continue;
        }
        if let Some(prev) = p.line_of(key) {
            p.issue(
                Some(line),
                key,
                format!("duplicate key (first set on line {prev})"),
            );
            continue;
        }
        p.values.insert(key.to_string(), (line, value.to_string()));
    }

    let model = match p.opt::<ModelKind>("model") {
        Some(m) => m,
        None if !p.has("model") => {
            p.issue(None, "model", "required (dcgan, vaegan or maven)");
            ModelKind::Maven
        }
        None => ModelKind::Maven,
    };
    if model == ModelKind::DcGan {
        for key in ENCODER_KEYS {
            if let Some(line) = p.line_of(key) {
                p.issue(Some(line), key, "dcgan has no encoder");
            }
        }
    }
    let k = p.get("ensemble.k", 1usize);
    if model != ModelKind::Maven && k > 1 {
        let line = p.line_of("ensemble.k");
        p.issue(
            line,
            "ensemble.k",
            format!("{model} uses a single discriminator"),
        );
    }
    let mode = p.get("ensemble.mode", EnsembleMode::Mean);
    let weights = p
        .list::<f64>("ensemble.weights")
        .unwrap_or_else(|| vec![1.0; k]);
    let ensemble = EnsembleConfig { k, weights, mode };
    if let Err(e) = ensemble.validate() {
        let line = p.line_of("ensemble.weights").or(p.line_of("ensemble.k"));
        p.issue(line, "ensemble", e.to_string());
    }

    let kind: String = p.get("dataset.kind", "glyphs".to_string());
    let dataset = match kind.as_str() {
        "glyphs" => DatasetSpec::Glyphs {
            samples_per_class: p.get("dataset.samples_per_class", 200),
            test_samples_per_class: p.get("dataset.test_samples_per_class", 50),
            size: p.get("dataset.size", 16),
            noise: p.get("dataset.noise", 0.1),
            seed: p.get("dataset.seed", 0),
        },
        "ring" => DatasetSpec::Ring {
            modes: p.get("dataset.modes", 8),
            samples_per_mode: p.get("dataset.samples_per_mode", 250),
            radius: p.get("dataset.radius", 2.0),
            sigma: p.get("dataset.sigma", 0.1),
            seed: p.get("dataset.seed", 0),
        },
        "folder" => DatasetSpec::Folder {
            train: p.require_path("dataset.path", "folder"),
            test: p.require_path("dataset.test_path", "folder"),
            image_size: p.get("dataset.image_size", 128),
            channels: p.get("dataset.channels", 1),
        },
        "cifar10" => DatasetSpec::Cifar10 {
            dir: p.require_path("dataset.path", "cifar10"),
        },
        "svhn" => DatasetSpec::Svhn {
            dir: p.require_path("dataset.path", "svhn"),
        },
        other => {
            let line = p.line_of("dataset.kind");
            p.issue(line, "dataset.kind", format!("unknown dataset {other:?}"));
            DatasetSpec::Glyphs {
                samples_per_class: 1,
                test_samples_per_class: 1,
                size: 16,
                noise: 0.0,
                seed: 0,
            }
        }
    };

    let defaults = NetworkSpec::default();
    let backbone: Option<String> = p.opt("network.backbone");
    if let Some(b) = &backbone {
        if b != "conv" && b != "dense" {
            let line = p.line_of("network.backbone");
            p.issue(
                line,
                "network.backbone",
                format!("expected conv or dense, got {b:?}"),
            );
        }
    }
    let network = NetworkSpec {
        backbone,
        channels: p.list("network.channels").unwrap_or(defaults.channels),
        hidden: p.list("network.hidden").unwrap_or(defaults.hidden),
        latent_dim: p.get("network.latent_dim", defaults.latent_dim),
        leaky_relu_alpha: p.get("network.leaky_relu_alpha", defaults.leaky_relu_alpha),
        dropout: p.get("network.dropout", defaults.dropout),
    };

    let td = TrainingConfig::default();
    let samples_per_epoch: Option<usize> = p.opt("train.samples_per_epoch");
    let batch_size = p.get("train.batch_size", td.batch_size);
    let training = TrainingConfig {
        samples_per_epoch: samples_per_epoch.unwrap_or(batch_size.max(1)),
        batch_size,
        epochs: p.get("train.epochs", td.epochs),
        labeled_fraction: p.get("train.labeled_fraction", td.labeled_fraction),
        lr_g: p.get("train.lr_g", td.lr_g),
        lr_d: p.get("train.lr_d", td.lr_d),
        lr_e: p.get("train.lr_e", td.lr_e),
        adam_beta1: p.get("train.adam_beta1", td.adam_beta1),
        seed: p.get("train.seed", td.seed),
    };
    if let Err(e) = training.validate() {
        p.issue(None, "train", e.to_string());
    }

    let ed = EvalConfig::default();
    let ddd_weights = match p.list::<f64>("eval.ddd_weights") {
        Some(w) if w.len() == 4 => [w[0], w[1], w[2], w[3]],
        Some(w) => {
            let line = p.line_of("eval.ddd_weights");
            p.issue(
                line,
                "eval.ddd_weights",
                format!("expected 4 weights, got {}", w.len()),
            );
            ed.ddd_weights
        }
        None => ed.ddd_weights,
    };
    if let Err(e) = crate::metrics::ddd_from_deltas(&[0.0; 4], &ddd_weights) {
        let line = p.line_of("eval.ddd_weights");
        p.issue(line, "eval.ddd_weights", e.to_string());
    }
    let eval = EvalConfig {
        generated: p.get("eval.generated", ed.generated),
        fid_repeats: p.get("eval.fid_repeats", ed.fid_repeats),
        ddd_weights,
        projection: p.get::<Projection>("eval.projection", ed.projection),
        embedder_seed: p.get("eval.embedder_seed", ed.embedder_seed),
        histogram_bins: p.get("eval.histogram_bins", ed.histogram_bins),
    };
    if eval.fid_repeats == 0 {
        let line = p.line_of("eval.fid_repeats");
        p.issue(line, "eval.fid_repeats", "must be at least 1");
    }
    if eval.histogram_bins < 2 {
        let line = p.line_of("eval.histogram_bins");
        p.issue(line, "eval.histogram_bins", "must be at least 2");
    }

    let output_dir: PathBuf = p
        .get::<String>("output.dir", "runs/experiment".into())
        .into();
    let output_dir = if output_dir.is_absolute() {
        output_dir
    } else {
        base.join(output_dir)
    };
    let repeats = p.get("repeats", 10usize);
    if repeats == 0 {
        let line = p.line_of("repeats");
        p.issue(line, "repeats", "must be at least 1");
    }
    let sweep_k = p.list("sweep.k").unwrap_or_else(|| vec![2, 3, 5]);
    if sweep_k.contains(&0) {
        let line = p.line_of("sweep.k");
        p.issue(line, "sweep.k", "ensemble sizes must be positive");
    }
    let cfg = ExperimentConfig {
        model,
        ensemble,
        dataset,
        train_limit: p.opt("dataset.train_limit"),
        test_limit: p.opt("dataset.test_limit"),
        network,
        training,
        samples_per_epoch,
        checkpoint_every: p.get("train.checkpoint_every", 0),
        eval,
        output_dir,
        repeats,
        sweep_k,
    };
    if p.issues.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(p.issues))
    }
}

/// Reads and validates a config file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![ConfigIssue {
            line: None,
            key: path.display().to_string(),
            message: e.to_string(),
        }])
    })?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base)
}
