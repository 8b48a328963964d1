//! Scores sample sets against a reference with FID and the moment distance
//! (DDD). Gaussian feature sets are compared with the closed-form FID, and
//! scalar samples show how DDD reacts to shifts in each moment.
//!
//! cargo run --example fid_and_ddd

use maven::metrics::{
    compute_ddd, compute_fid, compute_gaussian_stats, compute_moment_summary, DEFAULT_DDD_WEIGHTS,
};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

fn gaussian(n: usize, dim: usize, mean: f64, std: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let d = Normal::new(mean, std).unwrap();
    Array2::from_shape_simple_fn((n, dim), || d.sample(rng))
}

fn main() -> maven::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let dim = 8;
    let real = compute_gaussian_stats(&gaussian(20_000, dim, 0.0, 1.0, &mut rng))?;

    println!("FID against N(0, I) in {dim} dimensions");
    println!(
        "{:>6} {:>6} {:>10} {:>10}",
        "shift", "std", "sampled", "exact"
    );
    for (shift, std) in [(0.0, 1.0), (0.5, 1.0), (0.0, 2.0), (1.0, 0.5)] {
        let fake = compute_gaussian_stats(&gaussian(20_000, dim, shift, std, &mut rng))?;
        // Isotropic case: d * (shift^2 + (1 - std)^2).
        let exact = dim as f64 * (shift * shift + (1.0 - std) * (1.0 - std));
        println!(
            "{shift:>6} {std:>6} {:>10.4} {exact:>10.4}",
            compute_fid(&real, &fake)?
        );
    }

    let normal = Normal::new(0.0, 1.0).unwrap();
    let reference: Vec<f64> = (0..50_000).map(|_| normal.sample(&mut rng)).collect();
    let base = compute_moment_summary(&reference)?;
    let exp = Exp::new(1.0).unwrap();
    let candidates: [(&str, Vec<f64>); 4] = [
        (
            "same law",
            (0..50_000).map(|_| normal.sample(&mut rng)).collect(),
        ),
        (
            "mean +0.5",
            (0..50_000).map(|_| normal.sample(&mut rng) + 0.5).collect(),
        ),
        (
            "variance x4",
            (0..50_000).map(|_| 2.0 * normal.sample(&mut rng)).collect(),
        ),
        (
            "skewed",
            (0..50_000).map(|_| exp.sample(&mut rng) - 1.0).collect(),
        ),
    ];
    println!("\nDDD against N(0, 1), weights {DEFAULT_DDD_WEIGHTS:?}");
    for (name, xs) in candidates {
        let m = compute_moment_summary(&xs)?;
        println!(
            "{name:>12}: ddd {:.4}  moments [{:.3}, {:.3}, {:.3}, {:.3}]",
            compute_ddd(&base, &m, &DEFAULT_DDD_WEIGHTS)?,
            m.m1,
            m.m2,
            m.m3,
            m.m4
        );
    }
    Ok(())
}
