//! Image batches and their geometry.
//!
//! Images are stored as `(batch, height, width, channels)` arrays with pixel
//! values in `[-1, 1]`. The networks consume the same data flattened to
//! `(batch, height * width * channels)` rows in row-major (NHWC) order.

use ndarray::{Array2, Array4, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    /// Number of scalars in one image.
    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// A batch of images with optional per-item labels and labeled-mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBatch {
    pub images: Array4<f64>,
    pub labels: Option<Vec<usize>>,
    pub labeled_mask: Option<Vec<bool>>,
}

impl ImageBatch {
    pub fn new(images: Array4<f64>) -> Self {
        Self {
            images,
            labels: None,
            labeled_mask: None,
        }
    }

    pub fn with_labels(images: Array4<f64>, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != images.shape()[0] {
            return Err(Error::shape(
                "ImageBatch labels",
                images.shape()[0],
                labels.len(),
            ));
        }
        Ok(Self {
            images,
            labels: Some(labels),
            labeled_mask: None,
        })
    }

    /// Builds a batch from flattened NHWC rows.
    pub fn from_flat(rows: Array2<f64>, shape: ImageShape) -> Result<Self> {
        if rows.ncols() != shape.len() {
            return Err(Error::shape(
                "ImageBatch::from_flat",
                shape.len(),
                rows.ncols(),
            ));
        }
        let n = rows.nrows();
        let images = rows
            .into_shape_with_order((n, shape.height, shape.width, shape.channels))
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(Self::new(images))
    }

    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> ImageShape {
        let s = self.images.shape();
        ImageShape::new(s[1], s[2], s[3])
    }

    /// Flattened `(batch, H*W*C)` copy in NHWC order.
    pub fn to_flat(&self) -> Array2<f64> {
        let n = self.len();
        let len = self.shape().len();
        let data: Vec<f64> = self.images.iter().copied().collect();
        Array2::from_shape_vec((n, len), data).expect("length is n * H*W*C")
    }

    /// Per-image mean intensity, the scalar projection used by DDD and the
    /// density histograms.
    pub fn mean_intensities(&self) -> Vec<f64> {
        mean_intensities(self.to_flat().view())
    }
}

pub(crate) fn mean_intensities(rows: ArrayView2<'_, f64>) -> Vec<f64> {
    rows.rows()
        .into_iter()
        .map(|r| r.sum() / r.len().max(1) as f64)
        .collect()
}
