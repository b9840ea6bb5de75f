//! IDX container format used by MNIST-style datasets.
//!
//! Layout: big-endian `u32` magic, big-endian `u32` dimension sizes, then an
//! unsigned-byte payload. Gzip-wrapped files (leading `1f 8b`) are
//! decompressed transparently.

use std::fs;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Unsigned-byte images as stored on disk, shape `[count, rows, cols, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

impl RawImages {
    pub fn shape(&self) -> [usize; 4] {
        [self.count, self.rows, self.cols, 1]
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let n = self.rows * self.cols;
        &self.pixels[i * n..(i + 1) * n]
    }
}

/// Reads a file, inflating it first if it is gzip-compressed.
pub fn read_maybe_gzip(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let bytes = fs::read(path)?;
    inflate_if_gzip(bytes)
}

pub fn inflate_if_gzip(bytes: Vec<u8>) -> Result<Vec<u8>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &'static str) -> Result<u32> {
    bytes.get(at..at + 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]])).ok_or(Error::Truncated {
        what,
        expected: at + 4,
        found: bytes.len(),
    })
}

fn check_magic(bytes: &[u8], expected: u32, what: &'static str) -> Result<()> {
    let found = be_u32(bytes, 0, what)?;
    if found != expected {
        return Err(Error::Magic { expected, found });
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<RawImages> {
    const WHAT: &str = "IDX image file";
    check_magic(bytes, IMAGES_MAGIC, WHAT)?;
    let count = be_u32(bytes, 4, WHAT)? as usize;
    let rows = be_u32(bytes, 8, WHAT)? as usize;
    let cols = be_u32(bytes, 12, WHAT)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(Error::Truncated { what: WHAT, expected, found: bytes.len() });
    }
    Ok(RawImages { count, rows, cols, pixels: bytes[16..expected].to_vec() })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    const WHAT: &str = "IDX label file";
    check_magic(bytes, LABELS_MAGIC, WHAT)?;
    let count = be_u32(bytes, 4, WHAT)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(Error::Truncated { what: WHAT, expected, found: bytes.len() });
    }
    let labels = bytes[8..expected].to_vec();
    if let Some((index, &value)) = labels.iter().enumerate().find(|(_, &v)| v > 9) {
        return Err(Error::LabelRange { index, value });
    }
    Ok(labels)
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<RawImages> {
    parse_idx_images(&read_maybe_gzip(path)?)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    parse_idx_labels(&read_maybe_gzip(path)?)
}

pub fn encode_idx_images(images: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Maps each byte `v` to `v / 255`, giving a `[count, rows, cols, 1]` tensor.
pub fn normalize<T: Scalar>(raw: &RawImages) -> Tensor<T> {
    let scale = T::from_f64_lossy(255.0);
    let data = raw.pixels.iter().map(|&v| T::from_u8(v).expect("byte fits") / scale).collect();
    Tensor::new(raw.shape().to_vec(), data).expect("pixel count matches header")
}

/// Inverse of [`normalize`] for values that came from it.
pub fn denormalize<T: Scalar>(images: &Tensor<T>) -> Result<RawImages> {
    let shape = images.shape();
    let [count, rows, cols, 1] = *shape else {
        return Err(Error::Shape(format!("expected [count, rows, cols, 1], got {shape:?}")));
    };
    let pixels = images.data().iter().map(|&v| (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    Ok(RawImages { count, rows, cols, pixels })
}
