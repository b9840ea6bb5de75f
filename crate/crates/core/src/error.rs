use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("layer {layer}: {message}")]
    LayerShape { layer: usize, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("value out of range: {0}")]
    Domain(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("non-finite gradient in layer {layer} {param}")]
    NonFiniteGradient { layer: usize, param: &'static str },

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Diverged { epoch: usize, batch: usize, loss: f64 },

    #[error("bad magic number: expected {expected:#010x}, found {found:#010x}")]
    Magic { expected: u32, found: u32 },

    #[error("truncated {what}: expected {expected} bytes, found {found}")]
    Truncated { what: &'static str, expected: usize, found: usize },

    #[error("label {value} at index {index} is outside 0..=9")]
    LabelRange { index: usize, value: u8 },

    #[error("dataset size mismatch: {0}")]
    DatasetSize(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("unsupported model file version {found} (supported: {supported})")]
    ModelVersion { found: u32, supported: u32 },

    #[error("model checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },

    #[error("model kind mismatch: expected {expected}, file holds {found}")]
    ModelKind { expected: String, found: String },

    #[error("malformed model file: {0}")]
    ModelFormat(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
