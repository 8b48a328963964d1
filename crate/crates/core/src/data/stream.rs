use std::sync::Arc;

use ndarray::Array4;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetSplit, SemiSupervisedView};
use crate::batch::ImageBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamKind {
    /// Labeled items only; batches carry labels.
    Labeled,
    /// Unlabeled items only; images only.
    Unlabeled,
    /// Every item; batches carry the labeled mask but no labels.
    Any,
}

/// Endless, seed-deterministic minibatch iterator. Each epoch is a fresh
/// shuffle of the pool; the trailing partial batch is dropped.
#[derive(Debug, Clone)]
pub struct BatchStream {
    split: Arc<DatasetSplit>,
    mask: Vec<bool>,
    kind: StreamKind,
    pool: Vec<usize>,
    order: Vec<usize>,
    pos: usize,
    epoch: usize,
    batch_size: usize,
    rng: ChaCha8Rng,
}

pub fn batch_stream(
    view: &SemiSupervisedView,
    batch_size: usize,
    kind: StreamKind,
    seed: u64,
) -> Result<BatchStream> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch size must be at least 1".into(),
        ));
    }
    let pool = match kind {
        StreamKind::Labeled => view.labeled_indices(),
        StreamKind::Unlabeled => view.unlabeled_indices(),
        StreamKind::Any => (0..view.split.len()).collect(),
    };
    if pool.is_empty() {
        return Err(Error::Data(format!(
            "{kind:?} stream requested but the view has no such items"
        )));
    }
    if pool.len() < batch_size {
        return Err(Error::Data(format!(
            "{kind:?} stream has {} items, fewer than the batch size {batch_size}",
            pool.len()
        )));
    }
    Ok(BatchStream {
        split: view.split.clone(),
        mask: view.labeled_mask.clone(),
        kind,
        pool,
        order: Vec::new(),
        pos: 0,
        epoch: 0,
        batch_size,
        rng: ChaCha8Rng::seed_from_u64(seed),
    })
}

impl BatchStream {
    pub fn batches_per_epoch(&self) -> usize {
        self.pool.len() / self.batch_size
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Number of completed shuffles so far (the current epoch index, 1-based
    /// once the first batch has been drawn).
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    /// Next batch together with the dataset indices it was drawn from.
    pub fn next_indexed(&mut self) -> (Vec<usize>, ImageBatch) {
        if self.order.is_empty() || self.pos + self.batch_size > self.order.len() {
            self.order = self.pool.clone();
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
            self.epoch += 1;
        }
        let idx = self.order[self.pos..self.pos + self.batch_size].to_vec();
        self.pos += self.batch_size;
        let shape = self.split.shape();
        let images = Array4::from_shape_vec(
            (idx.len(), shape.height, shape.width, shape.channels),
            self.split.gather(&idx).into_raw_vec_and_offset().0,
        )
        .expect("gathered rows match image shape");
        let mut batch = ImageBatch::new(images);
        match self.kind {
            StreamKind::Labeled => {
                batch.labels = Some(idx.iter().map(|&i| self.split.labels()[i]).collect());
                batch.labeled_mask = Some(vec![true; idx.len()]);
            }
            StreamKind::Unlabeled => batch.labeled_mask = Some(vec![false; idx.len()]),
            StreamKind::Any => {
                batch.labeled_mask = Some(idx.iter().map(|&i| self.mask[i]).collect())
            }
        }
        (idx, batch)
    }
}

impl Iterator for BatchStream {
    type Item = ImageBatch;

    fn next(&mut self) -> Option<ImageBatch> {
        Some(self.next_indexed().1)
    }
}
