//! The two ways an ensemble of discriminators feeds back to the generator:
//! a weighted mean of all outputs, or the output of one member drawn at
//! random. Also prints the per-member gradient coefficients used in training.
//!
//! cargo run --example ensemble_feedback

use maven::ensemble::{
    aggregate_mean, select_random, EnsembleConfig, EnsembleMode, FeedbackSource,
};
use ndarray::array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> maven::Result<()> {
    // Fake-class probabilities from three discriminators on a batch of four.
    let outputs = vec![
        array![0.10, 0.80, 0.40, 0.55],
        array![0.20, 0.70, 0.35, 0.60],
        array![0.60, 0.20, 0.50, 0.05],
    ];
    let weights = [1.0, 1.0, 2.0];
    let mean = aggregate_mean(&outputs, &weights)?;
    println!("weighted mean (w = {weights:?}): {}", mean.value);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut counts = [0usize; 3];
    for step in 0..3000 {
        let pick = select_random(&outputs, &mut rng)?;
        if let FeedbackSource::Index(k) = pick.source {
            counts[k] += 1;
            if step < 3 {
                println!("step {step}: random feedback from D{k}: {}", pick.value);
            }
        }
    }
    println!("selection counts over 3000 steps: {counts:?}");

    for mode in [EnsembleMode::Mean, EnsembleMode::Random] {
        let cfg = EnsembleConfig {
            weights: weights.to_vec(),
            ..EnsembleConfig::uniform(3, mode)
        };
        cfg.validate()?;
        println!(
            "{mode} coefficients with D1 selected: {:?}",
            cfg.coefficients(Some(1))
        );
    }
    Ok(())
}
