//! Semi-supervised classification of synthetic stroke glyphs with 10% of
//! the labels, reporting test accuracy and per-class F1.
//!
//! cargo run --example semi_supervised_glyphs -- [epochs] [seeds] [k]

use std::sync::Arc;
use std::time::Instant;

use maven::data::{make_glyphs, mask_labels, Split, GLYPH_CLASSES};
use maven::ensemble::{EnsembleConfig, EnsembleMode};
use maven::evaluation::predict;
use maven::metrics::{accuracy, confusion_counts, f1_per_class};
use maven::networks::{Backbone, NetworkConfig};
use maven::training::{train, ModelConfig, TrainOptions, TrainingConfig};

fn network(shape: maven::ImageShape) -> NetworkConfig {
    NetworkConfig {
        latent_dim: 16,
        backbone: Backbone::Conv {
            channels: vec![8, 16],
        },
        ..NetworkConfig::conv(shape, GLYPH_CLASSES.len())
    }
}

fn main() -> maven::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let epochs = args.first().copied().unwrap_or(30);
    let seeds = args.get(1).copied().unwrap_or(1) as u64;
    let k = args.get(2).copied().unwrap_or(2);

    for seed in 0..seeds {
        let t = Instant::now();
        let train_set = Arc::new(make_glyphs(200, 16, 0.1, seed, Split::Train)?);
        let test_set = make_glyphs(50, 16, 0.1, seed + 1000, Split::Test)?;
        let view = mask_labels(train_set.clone(), 0.1, seed)?;
        let cfg = TrainingConfig {
            samples_per_epoch: train_set.len(),
            batch_size: 64,
            epochs,
            seed,
            ..TrainingConfig::default()
        };
        let model = ModelConfig::maven(
            network(train_set.shape()),
            EnsembleConfig::uniform(k, EnsembleMode::Mean),
        );
        let label = model.label();
        let out = train(&view, model, &cfg, &TrainOptions::default())?;
        let preds = predict(&out.state, &test_set.rows().to_owned())?;
        let acc = accuracy(&preds, test_set.labels())?;
        let f1 = f1_per_class(&confusion_counts(
            &preds,
            test_set.labels(),
            GLYPH_CLASSES.len(),
        )?);
        println!(
            "{label} seed {seed}: {} labeled, accuracy {acc:.3}, {:.1}s",
            view.labeled_count(),
            t.elapsed().as_secs_f64()
        );
        for (name, f) in GLYPH_CLASSES.iter().zip(&f1) {
            print!("{name}={f:.2} ");
        }
        println!();
    }
    Ok(())
}
