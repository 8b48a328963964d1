use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::batch::ImageShape;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, ConvGeometry, Init, Layer, Mode, Sequential};

/// Maps flattened images to feature vectors for FID.
pub trait FeatureEmbedder {
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn embed(&self, rows: &Array2<f64>) -> Result<Array2<f64>>;
}

/// Raw pixels as features; suitable for low-dimensional data.
#[derive(Debug, Clone)]
pub struct IdentityEmbedder {
    pub dim: usize,
}

impl FeatureEmbedder for IdentityEmbedder {
    fn name(&self) -> String {
        "identity".into()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.dim {
            return Err(Error::shape(
                "IdentityEmbedder input",
                self.dim,
                rows.ncols(),
            ));
        }
        Ok(rows.clone())
    }
}

/// A fixed, randomly initialized stride-2 convolutional stack followed by
/// global average pooling. Its features are only comparable with other runs
/// that use the same seed and image shape.
#[derive(Debug, Clone)]
pub struct RandomConvEmbedder {
    net: Sequential,
    shape: ImageShape,
    seed: u64,
    channels: usize,
}

const CHUNK: usize = 256;

impl RandomConvEmbedder {
    /// Halves the grid while it is even and larger than 8 (at most four
    /// times), doubling the width from 16 up to 64 channels.
    pub fn new(shape: ImageShape, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut h, mut w, mut c) = (shape.height, shape.width, shape.channels);
        let mut layers = Vec::new();
        let mut out = 16;
        while layers.len() < 8 && h > 8 && w > 8 && h % 2 == 0 && w % 2 == 0 {
            let g = ConvGeometry::new(h, w, c, 4, 2, 1)?;
            layers.push(Layer::Conv(Conv2d::new(
                g,
                out,
                Init::Normal(0.2),
                &mut rng,
            )));
            layers.push(Layer::LeakyRelu(0.2));
            h /= 2;
            w /= 2;
            c = out;
            out = (out * 2).min(64);
        }
        if layers.is_empty() {
            return Err(Error::Config(format!(
                "image shape {shape} is too small for the convolutional embedder"
            )));
        }
        Ok(Self {
            net: Sequential::new(layers),
            shape,
            seed,
            channels: c,
        })
    }
}

impl FeatureEmbedder for RandomConvEmbedder {
    fn name(&self) -> String {
        format!("random-conv(seed={})", self.seed)
    }

    fn dim(&self) -> usize {
        self.channels
    }

    fn embed(&self, rows: &Array2<f64>) -> Result<Array2<f64>> {
        if rows.ncols() != self.shape.len() {
            return Err(Error::shape(
                "RandomConvEmbedder input",
                self.shape.len(),
                rows.ncols(),
            ));
        }
        let c = self.channels;
        let mut out = Array2::zeros((rows.nrows(), c));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for start in (0..rows.nrows()).step_by(CHUNK) {
            let end = (start + CHUNK).min(rows.nrows());
            let y = self
                .net
                .forward(
                    &rows.slice(s![start..end, ..]).to_owned(),
                    Mode::Eval,
                    &mut rng,
                )
                .output;
            let positions = (y.ncols() / c) as f64;
            for (i, row) in y.rows().into_iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    out[[start + i, j % c]] += v / positions;
                }
            }
        }
        Ok(out)
    }
}

/// The convolutional embedder where the shape allows it, pixels otherwise.
pub fn default_embedder(shape: ImageShape, seed: u64) -> Box<dyn FeatureEmbedder> {
    match RandomConvEmbedder::new(shape, seed) {
        Ok(e) => Box::new(e),
        Err(_) => Box::new(IdentityEmbedder { dim: shape.len() }),
    }
}
