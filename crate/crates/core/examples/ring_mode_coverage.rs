//! Mode coverage on an 8-Gaussian ring: a single-discriminator GAN against
//! MAVEN with a three-discriminator ensemble, at matched step budgets.
//!
//! cargo run --release --example ring_mode_coverage -- [steps] [seeds]

use std::sync::Arc;
use std::time::Instant;

use maven::data::{make_toy_ring, mask_labels, modes_covered, ring_centers};
use maven::ensemble::{EnsembleConfig, EnsembleMode};
use maven::experiment::ring_scale;
use maven::networks::{Backbone, NetworkConfig};
use maven::training::{
    train_step, ModelConfig, ModelKind, ModelState, StreamSource, TrainingConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MODES: usize = 8;
const RADIUS: f64 = 2.0;
const SIGMA: f64 = 0.1;

fn network() -> NetworkConfig {
    NetworkConfig {
        latent_dim: 8,
        backbone: Backbone::Dense {
            hidden: vec![64, 64],
        },
        dropout_rate: 0.0,
        ..NetworkConfig::dense(maven::ImageShape::new(1, 1, 2), MODES)
    }
}

fn run(model: ModelConfig, steps: usize, seed: u64) -> maven::Result<usize> {
    let scale = ring_scale(RADIUS, SIGMA);
    let data = Arc::new(make_toy_ring(MODES, 250, RADIUS, SIGMA, seed)?.scaled(scale));
    let view = mask_labels(data, 0.1, seed)?;
    let training = TrainingConfig {
        batch_size: 64,
        lr_e: 2e-4,
        seed,
        ..TrainingConfig::default()
    };
    let mut state = ModelState::new(model, &training, seed)?;
    let mut source = StreamSource::new(&view, training.batch_size, seed)?;
    for _ in 0..steps {
        train_step(&mut state, &mut source)?;
    }
    let samples = state.sample(2000, &mut ChaCha8Rng::seed_from_u64(seed ^ 0xfeed)) / scale;
    Ok(modes_covered(
        &samples,
        &ring_centers(MODES, RADIUS),
        RADIUS / 4.0,
        0.02,
    ))
}

fn main() -> maven::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let steps = args.first().copied().unwrap_or(2000);
    let seeds = args.get(1).copied().unwrap_or(5) as u64;
    let models = [
        ModelConfig::baseline(ModelKind::DcGan, network()),
        ModelConfig::maven(network(), EnsembleConfig::uniform(3, EnsembleMode::Mean)),
    ];
    for model in models {
        let label = model.label();
        let t = Instant::now();
        let counts = (0..seeds)
            .map(|s| run(model.clone(), steps, s))
            .collect::<maven::Result<Vec<_>>>()?;
        println!(
            "{label:>18}: modes covered per seed {counts:?} ({:.1}s)",
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
