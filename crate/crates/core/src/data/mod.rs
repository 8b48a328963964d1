//! Dataset ingestion and the semi-supervised pipeline.

mod binary;
mod folder;
mod masking;
mod stream;
mod synthetic;

use ndarray::{Array2, Array4, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::batch::ImageShape;
use crate::error::{Error, Result};

pub use binary::{load_cifar10, load_svhn_mat, read_mat_variables, MatArray, CIFAR10_CLASSES};
pub use folder::load_image_folder;
pub use masking::{mask_labels, SemiSupervisedView};
pub use stream::{batch_stream, BatchStream, StreamKind};
pub use synthetic::{
    make_glyphs, make_toy_ring, modes_covered, ring_centers, ring_mode_mass, GLYPH_CLASSES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// An immutable labeled image set. Labels are zero-based class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    images: Array4<f64>,
    labels: Vec<usize>,
    pub split: Split,
    pub class_names: Vec<String>,
}

impl DatasetSplit {
    pub fn new(
        images: Array4<f64>,
        labels: Vec<usize>,
        split: Split,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n = images.shape()[0];
        if n == 0 {
            return Err(Error::Data("dataset is empty".into()));
        }
        if labels.len() != n {
            return Err(Error::shape("DatasetSplit labels", n, labels.len()));
        }
        if class_names.is_empty() {
            return Err(Error::Data("dataset has no classes".into()));
        }
        if let Some((i, &y)) = labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y >= class_names.len())
        {
            return Err(Error::Data(format!(
                "item {i} has label {y} but only {} classes exist",
                class_names.len()
            )));
        }
        if !images.iter().all(|v| v.is_finite()) {
            return Err(Error::Data("dataset contains non-finite pixels".into()));
        }
        let images = if images.is_standard_layout() {
            images
        } else {
            images.as_standard_layout().into_owned()
        };
        Ok(Self {
            images,
            labels,
            split,
            class_names,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn shape(&self) -> ImageShape {
        let s = self.images.shape();
        ImageShape::new(s[1], s[2], s[3])
    }

    pub fn images(&self) -> &Array4<f64> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// All images as flattened NHWC rows.
    pub fn rows(&self) -> ArrayView2<'_, f64> {
        let n = self.len();
        self.images
            .view()
            .into_shape_with_order((n, self.shape().len()))
            .expect("standard layout")
    }

    /// Flattened rows for the given item indices, in order.
    pub fn gather(&self, indices: &[usize]) -> Array2<f64> {
        self.rows().select(Axis(0), indices)
    }

    /// Per-image mean intensity.
    pub fn mean_intensities(&self) -> Vec<f64> {
        crate::batch::mean_intensities(self.rows())
    }

    /// Copy with every pixel multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            images: &self.images * factor,
            ..self.clone()
        }
    }

    /// Items per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }
}

/// Affine map from 8-bit intensities to `[-1, 1]`.
#[inline]
pub fn normalize_u8(v: u8) -> f64 {
    v as f64 / 127.5 - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_map_endpoints_and_invertibility() {
        assert_eq!(normalize_u8(0), -1.0);
        assert_eq!(normalize_u8(255), 1.0);
        for v in 0..=255u8 {
            let x = normalize_u8(v);
            assert!((-1.0..=1.0).contains(&x));
            assert_eq!(((x + 1.0) * 127.5).round() as u8, v);
        }
    }

    #[test]
    fn split_validation() {
        let imgs = Array4::zeros((2, 1, 1, 1));
        assert!(DatasetSplit::new(
            imgs.clone(),
            vec![0, 2],
            Split::Train,
            vec!["a".into(), "b".into()]
        )
        .is_err());
        assert!(DatasetSplit::new(imgs.clone(), vec![0], Split::Train, vec!["a".into()]).is_err());
        assert!(DatasetSplit::new(
            Array4::zeros((0, 1, 1, 1)),
            vec![],
            Split::Train,
            vec!["a".into()]
        )
        .is_err());
        let ok = DatasetSplit::new(imgs, vec![0, 1], Split::Train, vec!["a".into(), "b".into()])
            .unwrap();
        assert_eq!(ok.class_counts(), vec![1, 1]);
    }
}
