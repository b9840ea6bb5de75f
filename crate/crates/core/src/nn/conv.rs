//! Patch extraction for convolutions over NHWC batches.
//!
//! A convolution is `im2col` followed by one GEMM against an
//! `[kernel * kernel * in_channels, filters]` weight matrix. `col2im` is the
//! exact adjoint of `im2col`, which gives both the input gradient of a
//! convolution and the forward pass of a transposed convolution.

use super::spec::{conv_extent, Padding};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub in_c: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    /// Geometry of a forward convolution reading `[in_h, in_w, in_c]`.
    pub fn new(in_hwc: [usize; 3], kernel: usize, stride: usize, padding: Padding) -> Option<Self> {
        let [in_h, in_w, in_c] = in_hwc;
        let (out_h, pad_top) = conv_extent(in_h, kernel, stride, padding)?;
        let (out_w, pad_left) = conv_extent(in_w, kernel, stride, padding)?;
        Some(Self { in_h, in_w, in_c, out_h, out_w, kernel, stride, pad_top, pad_left })
    }

    pub fn patch_len(&self) -> usize {
        self.kernel * self.kernel * self.in_c
    }

    pub fn out_positions(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_h * self.in_w * self.in_c
    }

    /// Input row/column of kernel tap `k` at output position `o`, if inside the image.
    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(pad).filter(|&i| i < extent)
    }

    /// `[batch * out_h * out_w, patch_len]` patch matrix; padding reads as zero.
    pub fn im2col<T: Scalar>(&self, input: &[T], batch: usize) -> Vec<T> {
        let c = self.in_c;
        let patch = self.patch_len();
        let mut cols = vec![T::zero(); batch * self.out_positions() * patch];
        for b in 0..batch {
            let img = &input[b * self.in_len()..(b + 1) * self.in_len()];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let row = ((b * self.out_h + oy) * self.out_w + ox) * patch;
                    for ky in 0..self.kernel {
                        let Some(iy) = self.source(oy, ky, self.pad_top, self.in_h) else { continue };
                        for kx in 0..self.kernel {
                            let Some(ix) = self.source(ox, kx, self.pad_left, self.in_w) else { continue };
                            let dst = row + (ky * self.kernel + kx) * c;
                            let src = (iy * self.in_w + ix) * c;
                            cols[dst..dst + c].copy_from_slice(&img[src..src + c]);
                        }
                    }
                }
            }
        }
        cols
    }

    /// Scatter-adds a patch matrix back onto a `[batch, in_h, in_w, in_c]` buffer.
    pub fn col2im<T: Scalar>(&self, cols: &[T], batch: usize) -> Vec<T> {
        let c = self.in_c;
        let patch = self.patch_len();
        let mut out = vec![T::zero(); batch * self.in_len()];
        for b in 0..batch {
            let img = &mut out[b * self.in_len()..(b + 1) * self.in_len()];
            for oy in 0..self.out_h {
                for ox in 0..self.out_w {
                    let row = ((b * self.out_h + oy) * self.out_w + ox) * patch;
                    for ky in 0..self.kernel {
                        let Some(iy) = self.source(oy, ky, self.pad_top, self.in_h) else { continue };
                        for kx in 0..self.kernel {
                            let Some(ix) = self.source(ox, kx, self.pad_left, self.in_w) else { continue };
                            let src = row + (ky * self.kernel + kx) * c;
                            let dst = (iy * self.in_w + ix) * c;
                            for (d, &s) in img[dst..dst + c].iter_mut().zip(&cols[src..src + c]) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
