//! Overlaid density histograms of a real and a generated scalar sample.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DensityHistogram {
    /// `bins + 1` shared edges.
    pub edges: Vec<f64>,
    pub density_real: Vec<f64>,
    pub density_fake: Vec<f64>,
}

impl DensityHistogram {
    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    /// `sum_b min(real_b, fake_b) * width`: 1 for identical histograms, 0 for
    /// disjoint ones.
    pub fn overlap_coefficient(&self) -> f64 {
        let w = self.bin_width();
        self.density_real
            .iter()
            .zip(&self.density_fake)
            .map(|(a, b)| a.min(*b) * w)
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_left,bin_right,density_real,density_fake\n");
        for b in 0..self.density_real.len() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                self.edges[b],
                self.edges[b + 1],
                self.density_real[b],
                self.density_fake[b]
            );
        }
        out
    }
}

fn densities(samples: &[f64], lo: f64, width: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0usize; bins];
    for &v in samples {
        let b = (((v - lo) / width).floor() as isize).clamp(0, bins as isize - 1) as usize;
        counts[b] += 1;
    }
    let norm = samples.len() as f64 * width;
    counts.into_iter().map(|c| c as f64 / norm).collect()
}

/// Normalized histograms on shared edges spanning both samples.
pub fn density_histogram(real: &[f64], fake: &[f64], bins: usize) -> Result<DensityHistogram> {
    if bins < 2 {
        return Err(Error::InvalidArgument(format!(
            "histogram needs at least 2 bins, got {bins}"
        )));
    }
    if real.is_empty() || fake.is_empty() {
        return Err(Error::InvalidArgument(
            "histogram samples must be non-empty".into(),
        ));
    }
    if !real.iter().chain(fake).all(|v| v.is_finite()) {
        return Err(Error::NonFinite("histogram samples".into()));
    }
    let (mut lo, mut hi) = real
        .iter()
        .chain(fake)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|i| if i == bins { hi } else { lo + width * i as f64 })
        .collect();
    Ok(DensityHistogram {
        edges,
        density_real: densities(real, lo, width, bins),
        density_fake: densities(fake, lo, width, bins),
    })
}

const PLOT_W: u32 = 640;
const PLOT_H: u32 = 400;
const MARGIN: u32 = 30;

/// Renders both densities as overlaid bars (real blue, generated orange).
pub fn render_histogram(h: &DensityHistogram) -> RgbImage {
    let mut img = RgbImage::from_pixel(PLOT_W, PLOT_H, Rgb([255, 255, 255]));
    let bins = h.density_real.len() as u32;
    let peak = h
        .density_real
        .iter()
        .chain(&h.density_fake)
        .fold(0.0f64, |m, &v| m.max(v))
        .max(f64::MIN_POSITIVE);
    let plot_w = PLOT_W - 2 * MARGIN;
    let plot_h = PLOT_H - 2 * MARGIN;
    let colors = [[31.0, 119.0, 180.0], [255.0, 127.0, 14.0]];
    for (series, color) in [&h.density_real, &h.density_fake].into_iter().zip(colors) {
        for (b, &d) in series.iter().enumerate() {
            let x0 = MARGIN + plot_w * b as u32 / bins;
            let x1 = MARGIN + plot_w * (b as u32 + 1) / bins;
            let top = PLOT_H - MARGIN - ((d / peak) * plot_h as f64).round() as u32;
            for x in x0..x1 {
                for y in top..PLOT_H - MARGIN {
                    let p = img.get_pixel_mut(x, y);
                    for (v, &c) in p.0.iter_mut().zip(&color) {
                        *v = (0.5 * *v as f64 + 0.5 * c).round() as u8;
                    }
                }
            }
        }
    }
    for x in MARGIN..PLOT_W - MARGIN {
        img.put_pixel(x, PLOT_H - MARGIN, Rgb([0, 0, 0]));
    }
    for y in MARGIN..=PLOT_H - MARGIN {
        img.put_pixel(MARGIN, y, Rgb([0, 0, 0]));
    }
    img
}

/// Writes `<stem>.csv` and `<stem>.png`; returns the histogram and both paths.
pub fn emit_density_histogram(
    real: &[f64],
    fake: &[f64],
    bins: usize,
    stem: &Path,
) -> Result<(DensityHistogram, Vec<PathBuf>)> {
    let h = density_histogram(real, fake, bins)?;
    let csv = stem.with_extension("csv");
    let png = stem.with_extension("png");
    if let Some(dir) = stem.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(&csv, h.to_csv()).map_err(|e| Error::io(&csv, e))?;
    render_histogram(&h)
        .save(&png)
        .map_err(|source| Error::Decode {
            path: png.clone(),
            source,
        })?;
    Ok((h, vec![csv, png]))
}
