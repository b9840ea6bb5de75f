//! Self-describing binary model files.
//!
//! ```text
//! magic        b"WDNN"
//! version      u32
//! body_len     u64       bytes between this field and the checksum
//! kind         u8        autoencoder | classifier | generic
//! dtype        u8        bytes per stored parameter (4 or 8)
//! input_rank   u32, dims u32*
//! layer_count  u32, then per layer: kind tag u8 + kind-specific fields
//! param_count  u32, then per tensor: rank u32, dims u32*, values
//! crc32        u32       over every preceding byte
//! ```
//! All integers and floats are little-endian.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{LayerKind, LayerSpec, Network, Padding};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &[u8; 4] = b"WDNN";
pub const MODEL_VERSION: u32 = 1;
const PREAMBLE: usize = 4 + 4 + 8;

/// Role of a stored network; files carry it so one cannot be loaded as the other.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Autoencoder,
    Classifier,
    Generic,
}

impl ModelKind {
    fn tag(self) -> u8 {
        match self {
            ModelKind::Autoencoder => 0,
            ModelKind::Classifier => 1,
            ModelKind::Generic => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(ModelKind::Autoencoder),
            1 => Ok(ModelKind::Classifier),
            2 => Ok(ModelKind::Generic),
            t => Err(Error::ModelFormat(format!("unknown model kind tag {t}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Autoencoder => "autoencoder",
            ModelKind::Classifier => "classifier",
            ModelKind::Generic => "generic",
        })
    }
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_dims(out: &mut Vec<u8>, dims: &[usize]) {
    put_u32(out, dims.len());
    for &d in dims {
        put_u32(out, d);
    }
}

fn put_spec(out: &mut Vec<u8>, spec: &LayerSpec) {
    out.push(spec.kind().tag());
    match spec {
        LayerSpec::Conv2D { filters, kernel, stride, padding }
        | LayerSpec::TransposedConv2D { filters, kernel, stride, padding } => {
            put_u32(out, *filters);
            put_u32(out, *kernel);
            put_u32(out, *stride);
            out.push(matches!(padding, Padding::Same) as u8);
        }
        LayerSpec::MaxPool2D { size, stride } => {
            put_u32(out, *size);
            put_u32(out, *stride);
        }
        LayerSpec::Dense { units } => put_u32(out, *units),
        LayerSpec::Reshape { shape } => put_dims(out, shape),
        LayerSpec::Dropout { rate } => out.extend_from_slice(&rate.to_le_bytes()),
        LayerSpec::Flatten | LayerSpec::ReLU | LayerSpec::Sigmoid | LayerSpec::Softmax => {}
    }
}

/// Serializes a network to bytes.
pub fn encode_model<T: Scalar>(network: &Network<T>, kind: ModelKind) -> Vec<u8> {
    let mut body = Vec::new();
    body.push(kind.tag());
    body.push(T::DTYPE_TAG);
    put_dims(&mut body, network.input_shape());
    let specs: Vec<&LayerSpec> = network.specs().collect();
    put_u32(&mut body, specs.len());
    for spec in specs {
        put_spec(&mut body, spec);
    }
    let params = network.parameters();
    put_u32(&mut body, params.len());
    for (_, p) in params {
        put_dims(&mut body, p.shape());
        for &v in p.data() {
            v.write_le(&mut body);
        }
    }

    let mut out = Vec::with_capacity(PREAMBLE + body.len() + 4);
    out.extend_from_slice(MODEL_MAGIC);
    out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(body.len() as u64).to_le_bytes());
    out.extend_from_slice(&body);
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .bytes
            .get(self.at..self.at + n)
            .ok_or_else(|| Error::ModelFormat(format!("record overruns body at offset {}", self.at)))?;
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn dims(&mut self) -> Result<Vec<usize>> {
        let rank = self.u32()?;
        if rank > 8 {
            return Err(Error::ModelFormat(format!("implausible tensor rank {rank}")));
        }
        (0..rank).map(|_| self.u32()).collect()
    }

    fn spec(&mut self) -> Result<LayerSpec> {
        let tag = self.u8()?;
        let kind = LayerKind::from_tag(tag).ok_or_else(|| Error::ModelFormat(format!("unknown layer tag {tag}")))?;
        Ok(match kind {
            LayerKind::Conv2D | LayerKind::TransposedConv2D => {
                let (filters, kernel, stride) = (self.u32()?, self.u32()?, self.u32()?);
                let padding = if self.u8()? == 1 { Padding::Same } else { Padding::Valid };
                if kind == LayerKind::Conv2D {
                    LayerSpec::Conv2D { filters, kernel, stride, padding }
                } else {
                    LayerSpec::TransposedConv2D { filters, kernel, stride, padding }
                }
            }
            LayerKind::MaxPool2D => LayerSpec::MaxPool2D { size: self.u32()?, stride: self.u32()? },
            LayerKind::Dense => LayerSpec::Dense { units: self.u32()? },
            LayerKind::Flatten => LayerSpec::Flatten,
            LayerKind::Reshape => LayerSpec::Reshape { shape: self.dims()? },
            LayerKind::Dropout => {
                let b = self.take(8)?;
                LayerSpec::Dropout { rate: f64::from_le_bytes(b.try_into().expect("8 bytes")) }
            }
            LayerKind::ReLU => LayerSpec::ReLU,
            LayerKind::Sigmoid => LayerSpec::Sigmoid,
            LayerKind::Softmax => LayerSpec::Softmax,
        })
    }

    fn tensor<T: Scalar>(&mut self, dtype: u8) -> Result<Tensor<T>> {
        let shape = self.dims()?;
        let n: usize = shape.iter().product();
        let width = dtype as usize;
        let raw = self.take(n * width)?;
        let data = match dtype {
            4 => raw.chunks_exact(4).map(|c| T::from_f64_lossy(f32::read_le(c) as f64)).collect(),
            8 => raw.chunks_exact(8).map(|c| T::from_f64_lossy(f64::read_le(c))).collect(),
            d => return Err(Error::ModelFormat(format!("unsupported parameter width {d}"))),
        };
        Tensor::new(shape, data)
    }
}

/// Parses model bytes, returning the stored kind and network.
pub fn decode_model<T: Scalar>(bytes: &[u8]) -> Result<(ModelKind, Network<T>)> {
    const WHAT: &str = "model file";
    // magic first, so foreign files are reported as such whatever their length
    let head = &bytes[..bytes.len().min(4)];
    if !MODEL_MAGIC.starts_with(head) {
        let mut found = [0u8; 4];
        found[..head.len()].copy_from_slice(head);
        return Err(Error::Magic { expected: u32::from_be_bytes(*MODEL_MAGIC), found: u32::from_be_bytes(found) });
    }
    if bytes.len() < PREAMBLE {
        return Err(Error::Truncated { what: WHAT, expected: PREAMBLE, found: bytes.len() });
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::ModelVersion { found: version, supported: MODEL_VERSION });
    }
    let body_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let expected = PREAMBLE + body_len + 4;
    if bytes.len() < expected {
        return Err(Error::Truncated { what: WHAT, expected, found: bytes.len() });
    }
    if bytes.len() > expected {
        return Err(Error::ModelFormat(format!("{} trailing bytes after checksum", bytes.len() - expected)));
    }
    let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("4 bytes"));
    let computed = crc32fast::hash(&bytes[..expected - 4]);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }

    let mut r = Reader { bytes: &bytes[PREAMBLE..expected - 4], at: 0 };
    let kind = ModelKind::from_tag(r.u8()?)?;
    let dtype = r.u8()?;
    let input_shape = r.dims()?;
    let n_layers = r.u32()?;
    let specs = (0..n_layers).map(|_| r.spec()).collect::<Result<Vec<_>>>()?;
    let n_params = r.u32()?;
    let params = (0..n_params).map(|_| r.tensor(dtype)).collect::<Result<Vec<_>>>()?;
    if r.at != r.bytes.len() {
        return Err(Error::ModelFormat("unparsed bytes at end of body".into()));
    }
    Ok((kind, Network::from_parts(input_shape, specs, params)?))
}

/// Writes the model atomically (temporary file, then rename).
pub fn save_model<T: Scalar>(network: &Network<T>, kind: ModelKind, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_model(network, kind))
}

/// Loads a model of any kind.
pub fn load_model<T: Scalar>(path: impl AsRef<Path>) -> Result<(ModelKind, Network<T>)> {
    decode_model(&fs::read(path)?)
}

/// Loads a model and checks its kind tag.
pub fn load_model_as<T: Scalar>(path: impl AsRef<Path>, expected: ModelKind) -> Result<Network<T>> {
    let (kind, net) = load_model(path)?;
    if kind != expected {
        return Err(Error::ModelKind { expected: expected.to_string(), found: kind.to_string() });
    }
    Ok(net)
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}
