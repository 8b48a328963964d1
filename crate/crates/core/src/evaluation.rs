//! Scoring a trained model: FID over repeated redraws, DDD, test accuracy and
//! class-wise F1.

use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DatasetSplit;
use crate::error::{Error, Result};
use crate::metrics::{
    accuracy, compute_ddd, compute_gaussian_stats, compute_moment_summary, confusion_counts,
    default_embedder, f1_per_class, fid_repeated, FeatureEmbedder, GaussianStats, MetricReport,
    MomentSummary, Projection, DEFAULT_DDD_WEIGHTS,
};
use crate::networks::predict_classes;
use crate::training::ModelState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Generated samples per FID draw; 0 means as many as the training set.
    pub generated: usize,
    pub fid_repeats: usize,
    pub ddd_weights: [f64; 4],
    pub projection: Projection,
    pub embedder_seed: u64,
    pub histogram_bins: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            generated: 0,
            fid_repeats: 20,
            ddd_weights: DEFAULT_DDD_WEIGHTS,
            projection: Projection::MeanIntensity,
            embedder_seed: 1234,
            histogram_bins: 30,
        }
    }
}

/// Statistics of the real training images, computed once per experiment.
pub struct RealReference {
    pub embedder: Box<dyn FeatureEmbedder>,
    pub stats: GaussianStats,
    pub projected: Vec<f64>,
    pub moments: MomentSummary,
    pub count: usize,
}

impl RealReference {
    pub fn new(train: &DatasetSplit, cfg: &EvalConfig) -> Result<Self> {
        let embedder = default_embedder(train.shape(), cfg.embedder_seed);
        let rows = train.rows().to_owned();
        let stats = compute_gaussian_stats(&embedder.embed(&rows)?)?;
        let projected = cfg.projection.apply(&rows);
        let moments = compute_moment_summary(&projected)?;
        Ok(Self {
            embedder,
            stats,
            projected,
            moments,
            count: train.len(),
        })
    }
}

/// Class probabilities for `rows`, evaluated in chunks.
pub fn predict(state: &ModelState, rows: &Array2<f64>) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(rows.nrows());
    for start in (0..rows.nrows()).step_by(512) {
        let end = (start + 512).min(rows.nrows());
        let probs = state.classify(&rows.slice(s![start..end, ..]).to_owned())?;
        out.extend(predict_classes(&probs));
    }
    Ok(out)
}

/// Scores `state`. Returns the report and the first generated sample set
/// (the one DDD and the density histogram are computed from).
pub fn evaluate(
    state: &ModelState,
    reference: &RealReference,
    test: &DatasetSplit,
    cfg: &EvalConfig,
    seed: u64,
    repeat: usize,
) -> Result<(MetricReport, Array2<f64>)> {
    let generated = if cfg.generated == 0 {
        reference.count
    } else {
        cfg.generated
    };
    if generated < 4 {
        return Err(Error::Config(format!(
            "need at least 4 generated samples, got {generated}"
        )));
    }
    let mut first: Option<Array2<f64>> = None;
    let fid = fid_repeated(&reference.stats, cfg.fid_repeats, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x5eed_0000 + r as u64));
        let fake = state.sample(generated, &mut rng);
        let feats = reference.embedder.embed(&fake)?;
        if first.is_none() {
            first = Some(fake);
        }
        Ok(feats)
    })?;
    let fake = first.expect("at least one redraw");
    let fake_moments = compute_moment_summary(&cfg.projection.apply(&fake))?;
    let ddd = compute_ddd(&reference.moments, &fake_moments, &cfg.ddd_weights)?;

    let predictions = predict(state, &test.rows().to_owned())?;
    let acc = accuracy(&predictions, test.labels())?;
    let counts = confusion_counts(&predictions, test.labels(), test.n_classes())?;
    let report = MetricReport {
        model: state.config.label(),
        seed,
        repeat,
        fid,
        ddd,
        real_moments: reference.moments,
        fake_moments,
        accuracy: acc,
        f1: f1_per_class(&counts),
        class_names: test.class_names.clone(),
        embedder: reference.embedder.name(),
        generated,
        steps: state.step,
    };
    Ok((report, fake))
}
