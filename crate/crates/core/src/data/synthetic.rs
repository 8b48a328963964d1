//! File-free datasets for smoke tests and examples.

use std::f64::consts::PI;

use ndarray::Array4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DatasetSplit, Split};
use crate::error::{Error, Result};

/// Centers of a `modes`-point ring: angle `2*pi*k/modes`, distance `radius`.
pub fn ring_centers(modes: usize, radius: f64) -> Vec<[f64; 2]> {
    (0..modes)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / modes as f64;
            [radius * a.cos(), radius * a.sin()]
        })
        .collect()
}

/// Isotropic Gaussian mixture on a ring, stored as `1x1x2` images holding raw
/// coordinates (not rescaled to `[-1, 1]`; use [`DatasetSplit::scaled`]).
/// Items are grouped by mode and labeled with the mode index.
pub fn make_toy_ring(
    modes: usize,
    samples_per_mode: usize,
    radius: f64,
    sigma: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if modes < 2 {
        return Err(Error::InvalidArgument(format!(
            "ring needs at least 2 modes, got {modes}"
        )));
    }
    if samples_per_mode == 0 {
        return Err(Error::InvalidArgument(
            "samples_per_mode must be positive".into(),
        ));
    }
    if !(sigma >= 0.0 && sigma.is_finite() && radius.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "bad ring geometry radius={radius} sigma={sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let centers = ring_centers(modes, radius);
    let n = modes * samples_per_mode;
    let mut data = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..samples_per_mode {
            data.push(c[0] + sigma * noise.sample(&mut rng));
            data.push(c[1] + sigma * noise.sample(&mut rng));
            labels.push(k);
        }
    }
    let images = Array4::from_shape_vec((n, 1, 1, 2), data).expect("two coordinates per item");
    let names = (0..modes).map(|k| format!("mode{k}")).collect();
    DatasetSplit::new(images, labels, Split::Train, names)
}

/// Fraction of `points` (rows of `(x, y)`) lying within `within` of each
/// center. A point close to two centers counts for both.
pub fn ring_mode_mass(
    points: &ndarray::Array2<f64>,
    centers: &[[f64; 2]],
    within: f64,
) -> Vec<f64> {
    let n = points.nrows().max(1) as f64;
    centers
        .iter()
        .map(|c| {
            let hits = points
                .rows()
                .into_iter()
                .filter(|p| (p[0] - c[0]).hypot(p[1] - c[1]) <= within)
                .count();
            hits as f64 / n
        })
        .collect()
}

/// Number of centers holding at least `min_mass` of the points within `within`.
pub fn modes_covered(
    points: &ndarray::Array2<f64>,
    centers: &[[f64; 2]],
    within: f64,
    min_mass: f64,
) -> usize {
    ring_mode_mass(points, centers, within)
        .iter()
        .filter(|&&m| m >= min_mass)
        .count()
}

pub const GLYPH_CLASSES: [&str; 10] = [
    "ring", "vbar", "hbar", "diag", "anti", "plus", "cross", "box", "tee", "ell",
];

type Segment = ([f64; 2], [f64; 2]);

fn glyph_segments(class: usize) -> Vec<Segment> {
    let s = |a: [f64; 2], b: [f64; 2]| (a, b);
    match class {
        1 => vec![s([0.5, 0.15], [0.5, 0.85])],
        2 => vec![s([0.15, 0.5], [0.85, 0.5])],
        3 => vec![s([0.2, 0.2], [0.8, 0.8])],
        4 => vec![s([0.2, 0.8], [0.8, 0.2])],
        5 => vec![s([0.5, 0.15], [0.5, 0.85]), s([0.15, 0.5], [0.85, 0.5])],
        6 => vec![s([0.2, 0.2], [0.8, 0.8]), s([0.2, 0.8], [0.8, 0.2])],
        7 => vec![
            s([0.2, 0.2], [0.8, 0.2]),
            s([0.8, 0.2], [0.8, 0.8]),
            s([0.8, 0.8], [0.2, 0.8]),
            s([0.2, 0.8], [0.2, 0.2]),
        ],
        8 => vec![s([0.15, 0.2], [0.85, 0.2]), s([0.5, 0.2], [0.5, 0.85])],
        9 => vec![s([0.25, 0.15], [0.25, 0.8]), s([0.25, 0.8], [0.8, 0.8])],
        _ => Vec::new(),
    }
}

fn segment_distance(p: [f64; 2], (a, b): Segment) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / (ab[0] * ab[0] + ab[1] * ab[1])).clamp(0.0, 1.0);
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// Ten-class synthetic stroke glyphs (`size x size x 1`, values in `[-1, 1]`)
/// with random shift, scale, stroke width and additive pixel noise.
/// `samples_per_class` items per class, interleaved by class.
pub fn make_glyphs(
    samples_per_class: usize,
    size: usize,
    noise: f64,
    seed: u64,
    split: Split,
) -> Result<DatasetSplit> {
    if samples_per_class == 0 || size < 4 {
        return Err(Error::InvalidArgument(format!(
            "glyphs need samples_per_class >= 1 and size >= 4, got {samples_per_class} and {size}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise must be non-negative, got {noise}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let n = samples_per_class * GLYPH_CLASSES.len();
    let mut data = Vec::with_capacity(n * size * size);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % GLYPH_CLASSES.len();
        let segments = glyph_segments(class);
        let shift = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];
        let scale = rng.random_range(0.8..1.1);
        let half_width = rng.random_range(0.06..0.1);
        for r in 0..size {
            for c in 0..size {
                let u = (c as f64 + 0.5) / size as f64;
                let v = (r as f64 + 0.5) / size as f64;
                let p = [
                    (u - 0.5 - shift[0]) / scale + 0.5,
                    (v - 0.5 - shift[1]) / scale + 0.5,
                ];
                let d = if class == 0 {
                    (((p[0] - 0.5).powi(2) + (p[1] - 0.5).powi(2)).sqrt() - 0.3).abs()
                } else {
                    segments
                        .iter()
                        .map(|&s| segment_distance(p, s))
                        .fold(f64::INFINITY, f64::min)
                };
                let ink = if d < half_width { 1.0 } else { -1.0 };
                data.push((ink + noise * unit.sample(&mut rng)).clamp(-1.0, 1.0));
            }
        }
        labels.push(class);
    }
    let images = Array4::from_shape_vec((n, size, size, 1), data).expect("size*size per glyph");
    DatasetSplit::new(
        images,
        labels,
        split,
        GLYPH_CLASSES.iter().map(|s| s.to_string()).collect(),
    )
}
