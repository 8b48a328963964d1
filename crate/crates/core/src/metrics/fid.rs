use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean and unbiased covariance of a set of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianStats {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Sample mean and unbiased sample covariance of the rows of `features`.
pub fn compute_gaussian_stats(features: &Array2<f64>) -> Result<GaussianStats> {
    let (n, d) = features.dim();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "Gaussian statistics need at least 2 samples, got {n}"
        )));
    }
    if !features.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("feature vectors".into()));
    }
    let mean = features.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let centered = features - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let covariance = DMatrix::from_fn(d, d, |i, j| 0.5 * (cov[[i, j]] + cov[[j, i]]));
    Ok(GaussianStats {
        mean: DVector::from_iterator(d, mean.iter().copied()),
        covariance,
    })
}

const MAX_SWEEPS: usize = 100_000;

/// Eigenvalues of a symmetric matrix with small negative values clamped to 0.
fn psd_eigen(m: DMatrix<f64>) -> Result<nalgebra::SymmetricEigen<f64, nalgebra::Dyn>> {
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let mut eig = m
        .try_symmetric_eigen(f64::EPSILON, MAX_SWEEPS)
        .ok_or(Error::NoConvergence)?;
    for v in eig.eigenvalues.iter_mut() {
        if *v < -1e-6 * scale {
            return Err(Error::NotPositiveSemiDefinite(*v));
        }
        *v = v.max(0.0);
    }
    Ok(eig)
}

fn psd_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = psd_eigen(m.clone())?;
    let s = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    let r = &eig.eigenvectors * s * eig.eigenvectors.transpose();
    Ok((&r + r.transpose()) * 0.5)
}

/// Frechet distance `|mu_r - mu_f|^2 + Tr(S_r + S_f - 2 (S_r S_f)^(1/2))`.
///
/// The trace of `(S_r S_f)^(1/2)` is taken from the eigenvalues of the
/// symmetric matrix `S_r^(1/2) S_f S_r^(1/2)`, which is similar to the product.
pub fn compute_fid(real: &GaussianStats, fake: &GaussianStats) -> Result<f64> {
    if real.dim() != fake.dim()
        || real.covariance.nrows() != real.dim()
        || fake.covariance.nrows() != fake.dim()
    {
        return Err(Error::shape(
            "compute_fid dimension",
            real.dim(),
            fake.dim(),
        ));
    }
    let diff = &real.mean - &fake.mean;
    let root_r = psd_sqrt(&real.covariance)?;
    let inner = &root_r * &fake.covariance * &root_r;
    let inner = (&inner + inner.transpose()) * 0.5;
    let tr_sqrt: f64 = psd_eigen(inner)?.eigenvalues.iter().map(|v| v.sqrt()).sum();
    let fid = diff.dot(&diff) + real.covariance.trace() + fake.covariance.trace() - 2.0 * tr_sqrt;
    if !fid.is_finite() {
        return Err(Error::NonFinite("FID".into()));
    }
    Ok(fid.max(0.0))
}

/// FID over repeated sample redraws, reported as mean and sample standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidSummary {
    pub values: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl FidSummary {
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument(
                "FID summary needs at least one value".into(),
            ));
        }
        let (mean, std) = mean_std(&values);
        Ok(Self { values, mean, std })
    }
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// FID between fixed real statistics and `repeats` fresh fake feature draws.
pub fn fid_repeated(
    real: &GaussianStats,
    repeats: usize,
    mut draw: impl FnMut(usize) -> Result<Array2<f64>>,
) -> Result<FidSummary> {
    if repeats == 0 {
        return Err(Error::InvalidArgument(
            "FID repeats must be at least 1".into(),
        ));
    }
    let values = (0..repeats)
        .map(|r| compute_fid(real, &compute_gaussian_stats(&draw(r)?)?))
        .collect::<Result<Vec<_>>>()?;
    FidSummary::from_values(values)
}
