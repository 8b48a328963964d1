//! Trains a small model on glyphs, saves a checkpoint, reloads it, checks
//! that the reloaded model classifies identically, and writes a density
//! histogram of real versus generated mean intensities.
//!
//! cargo run --example checkpoint_and_histogram -- [out_dir]

use std::path::PathBuf;
use std::sync::Arc;

use maven::checkpoint::{load_state, save_state};
use maven::data::{make_glyphs, mask_labels, Split, GLYPH_CLASSES};
use maven::ensemble::{EnsembleConfig, EnsembleMode};
use maven::evaluation::predict;
use maven::histogram::emit_density_histogram;
use maven::metrics::{accuracy, Projection};
use maven::networks::{Backbone, NetworkConfig};
use maven::training::{train, ModelConfig, TrainOptions, TrainingConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> maven::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("target/example-checkpoint"));
    let train_set = Arc::new(make_glyphs(60, 16, 0.1, 0, Split::Train)?);
    let test_set = make_glyphs(20, 16, 0.1, 1, Split::Test)?;
    let view = mask_labels(train_set.clone(), 0.2, 0)?;
    let net = NetworkConfig {
        latent_dim: 16,
        backbone: Backbone::Conv {
            channels: vec![8, 16],
        },
        ..NetworkConfig::conv(train_set.shape(), GLYPH_CLASSES.len())
    };
    let model = ModelConfig::maven(net, EnsembleConfig::uniform(2, EnsembleMode::Random));
    let cfg = TrainingConfig {
        samples_per_epoch: train_set.len(),
        batch_size: 32,
        epochs: 3,
        ..TrainingConfig::default()
    };
    let trained = train(&view, model, &cfg, &TrainOptions::default())?.state;

    let dir = save_state(&trained, &out)?;
    let reloaded = load_state(&dir)?;
    let rows = test_set.rows().to_owned();
    let (a, b) = (predict(&trained, &rows)?, predict(&reloaded, &rows)?);
    let agree = a.iter().zip(&b).filter(|(x, y)| x == y).count();
    println!("checkpoint {} at step {}", dir.display(), reloaded.step);
    println!(
        "test accuracy {:.3}, reloaded predictions agree on {agree}/{}",
        accuracy(&a, test_set.labels())?,
        a.len()
    );

    let fake = reloaded.sample(train_set.len(), &mut ChaCha8Rng::seed_from_u64(3));
    let real = Projection::MeanIntensity.apply(&train_set.rows().to_owned());
    let fake = Projection::MeanIntensity.apply(&fake);
    let (h, files) = emit_density_histogram(&real, &fake, 30, &out.join("density"))?;
    println!(
        "density overlap {:.3}; wrote {:?}",
        h.overlap_coefficient(),
        files
    );
    Ok(())
}
