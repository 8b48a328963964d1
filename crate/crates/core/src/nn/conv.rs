//! Patch extraction for strided 2-D convolutions on NHWC rows.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of a convolution from an `in_h x in_w x in_c` grid to an
/// `out_h x out_w` grid of patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeometry {
    pub fn new(
        in_h: usize,
        in_w: usize,
        in_c: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        if kernel == 0 || stride == 0 || in_c == 0 {
            return Err(Error::Config(
                "kernel, stride and channels must be > 0".into(),
            ));
        }
        if in_h + 2 * pad < kernel || in_w + 2 * pad < kernel {
            return Err(Error::Config(format!(
                "kernel {kernel} does not fit a {in_h}x{in_w} input with padding {pad}"
            )));
        }
        let out_h = (in_h + 2 * pad - kernel) / stride + 1;
        let out_w = (in_w + 2 * pad - kernel) / stride + 1;
        Ok(Self {
            in_h,
            in_w,
            in_c,
            out_h,
            out_w,
            kernel,
            stride,
            pad,
        })
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    pub fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    #[inline]
    fn source(&self, o: usize, k: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(self.pad)
    }
}

/// Unfolds `n` images into a `(n * positions, patch_len)` matrix whose
/// columns are ordered `(ky, kx, channel)`.
pub fn im2col(x: &[f64], n: usize, g: &ConvGeometry) -> Array2<f64> {
    let patch = g.patch_len();
    let in_len = g.in_len();
    debug_assert_eq!(x.len(), n * in_len);
    let mut cols = vec![0.0; n * g.positions() * patch];
    for b in 0..n {
        let img = &x[b * in_len..(b + 1) * in_len];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = ((b * g.out_h + oy) * g.out_w + ox) * patch;
                for ky in 0..g.kernel {
                    let Some(iy) = g.source(oy, ky).filter(|&iy| iy < g.in_h) else {
                        continue;
                    };
                    for kx in 0..g.kernel {
                        let Some(ix) = g.source(ox, kx).filter(|&ix| ix < g.in_w) else {
                            continue;
                        };
                        let src = (iy * g.in_w + ix) * g.in_c;
                        let dst = row + (ky * g.kernel + kx) * g.in_c;
                        cols[dst..dst + g.in_c].copy_from_slice(&img[src..src + g.in_c]);
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((n * g.positions(), patch), cols).expect("sized above")
}

/// Adjoint of [`im2col`]: scatters patch rows back onto `n` images, summing
/// overlaps. Returns `(n, in_len)`.
pub fn col2im(cols: &[f64], n: usize, g: &ConvGeometry) -> Array2<f64> {
    let patch = g.patch_len();
    let in_len = g.in_len();
    debug_assert_eq!(cols.len(), n * g.positions() * patch);
    let mut x = vec![0.0; n * in_len];
    for b in 0..n {
        let img = &mut x[b * in_len..(b + 1) * in_len];
        for oy in 0..g.out_h {
            for ox in 0..g.out_w {
                let row = ((b * g.out_h + oy) * g.out_w + ox) * patch;
                for ky in 0..g.kernel {
                    let Some(iy) = g.source(oy, ky).filter(|&iy| iy < g.in_h) else {
                        continue;
                    };
                    for kx in 0..g.kernel {
                        let Some(ix) = g.source(ox, kx).filter(|&ix| ix < g.in_w) else {
                            continue;
                        };
                        let dst = (iy * g.in_w + ix) * g.in_c;
                        let src = row + (ky * g.kernel + kx) * g.in_c;
                        for c in 0..g.in_c {
                            img[dst + c] += cols[src + c];
                        }
                    }
                }
            }
        }
    }
    Array2::from_shape_vec((n, in_len), x).expect("sized above")
}
