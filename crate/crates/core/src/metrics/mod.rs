//! Evaluation metrics: FID, the moment-based distribution distance (DDD),
//! accuracy and class-wise F1.

mod classification;
mod embed;
mod fid;
mod moments;

use serde::{Deserialize, Serialize};

pub use classification::{
    accuracy, confusion_counts, confusion_matrix, f1_per_class, f1_score, ConfusionCounts,
};
pub use embed::{default_embedder, FeatureEmbedder, IdentityEmbedder, RandomConvEmbedder};
pub use fid::{
    compute_fid, compute_gaussian_stats, fid_repeated, mean_std, FidSummary, GaussianStats,
};
pub use moments::{
    compute_ddd, compute_moment_summary, ddd_from_deltas, normalized_difference, MomentSummary,
    DEFAULT_DDD_WEIGHTS,
};

/// Scalar projection whose distribution DDD and the density histograms compare.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projection {
    /// One value per image: its mean pixel intensity.
    #[default]
    MeanIntensity,
    /// Every pixel value of every image.
    Pixels,
}

impl Projection {
    pub fn apply(self, rows: &ndarray::Array2<f64>) -> Vec<f64> {
        match self {
            Projection::MeanIntensity => crate::batch::mean_intensities(rows.view()),
            Projection::Pixels => rows.iter().copied().collect(),
        }
    }
}

impl std::str::FromStr for Projection {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "mean_intensity" | "mean" => Ok(Projection::MeanIntensity),
            "pixels" => Ok(Projection::Pixels),
            other => Err(crate::Error::Config(format!(
                "unknown projection {other:?}"
            ))),
        }
    }
}

/// Evaluation of one trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub model: String,
    pub seed: u64,
    pub repeat: usize,
    pub fid: FidSummary,
    pub ddd: f64,
    pub real_moments: MomentSummary,
    pub fake_moments: MomentSummary,
    pub accuracy: f64,
    pub f1: Vec<f64>,
    pub class_names: Vec<String>,
    pub embedder: String,
    pub generated: usize,
    pub steps: usize,
}
