use std::fmt;

/// Spatial padding mode for (transposed) convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// No padding; output shrinks by `kernel - 1`.
    Valid,
    /// Output size is `ceil(input / stride)` for convolutions and
    /// `input * stride` for transposed convolutions.
    Same,
}

/// Declarative description of one sequential layer.
///
/// Spatial layers work on per-sample `[height, width, channels]` shapes;
/// `Dense` and `Softmax` expect flat `[features]` inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2D { filters: usize, kernel: usize, stride: usize, padding: Padding },
    TransposedConv2D { filters: usize, kernel: usize, stride: usize, padding: Padding },
    MaxPool2D { size: usize, stride: usize },
    Dense { units: usize },
    Flatten,
    Reshape { shape: Vec<usize> },
    Dropout { rate: f64 },
    ReLU,
    Sigmoid,
    Softmax,
}

/// Field-less discriminant of [`LayerSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Conv2D,
    TransposedConv2D,
    MaxPool2D,
    Dense,
    Flatten,
    Reshape,
    Dropout,
    ReLU,
    Sigmoid,
    Softmax,
}

impl LayerKind {
    pub const ALL: [LayerKind; 10] = [
        LayerKind::Conv2D,
        LayerKind::TransposedConv2D,
        LayerKind::MaxPool2D,
        LayerKind::Dense,
        LayerKind::Flatten,
        LayerKind::Reshape,
        LayerKind::Dropout,
        LayerKind::ReLU,
        LayerKind::Sigmoid,
        LayerKind::Softmax,
    ];

    pub(crate) fn tag(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

fn spatial(input: &[usize]) -> Result<[usize; 3], String> {
    match *input {
        [h, w, c] => Ok([h, w, c]),
        _ => Err(format!("expected [height, width, channels], got {input:?}")),
    }
}

fn flat(input: &[usize]) -> Result<usize, String> {
    match *input {
        [n] => Ok(n),
        _ => Err(format!("expected a flat [features] input, got {input:?}")),
    }
}

/// Output extent and leading pad of a forward convolution along one axis.
pub(crate) fn conv_extent(input: usize, kernel: usize, stride: usize, padding: Padding) -> Option<(usize, usize)> {
    match padding {
        Padding::Valid => (input >= kernel).then(|| ((input - kernel) / stride + 1, 0)),
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Some((out, total / 2))
        }
    }
}

pub(crate) fn transposed_extent(input: usize, kernel: usize, stride: usize, padding: Padding) -> usize {
    match padding {
        Padding::Valid => (input - 1) * stride + kernel,
        Padding::Same => input * stride,
    }
}

impl LayerSpec {
    pub fn kind(&self) -> LayerKind {
        match self {
            LayerSpec::Conv2D { .. } => LayerKind::Conv2D,
            LayerSpec::TransposedConv2D { .. } => LayerKind::TransposedConv2D,
            LayerSpec::MaxPool2D { .. } => LayerKind::MaxPool2D,
            LayerSpec::Dense { .. } => LayerKind::Dense,
            LayerSpec::Flatten => LayerKind::Flatten,
            LayerSpec::Reshape { .. } => LayerKind::Reshape,
            LayerSpec::Dropout { .. } => LayerKind::Dropout,
            LayerSpec::ReLU => LayerKind::ReLU,
            LayerSpec::Sigmoid => LayerKind::Sigmoid,
            LayerSpec::Softmax => LayerKind::Softmax,
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, String> {
        if input.is_empty() || input.contains(&0) {
            return Err(format!("degenerate input shape {input:?}"));
        }
        match self {
            LayerSpec::Conv2D { filters, kernel, stride, padding } => {
                let [h, w, _] = spatial(input)?;
                check_window(*filters, *kernel, *stride)?;
                let (oh, _) = conv_extent(h, *kernel, *stride, *padding)
                    .ok_or_else(|| format!("kernel {kernel} larger than input height {h}"))?;
                let (ow, _) = conv_extent(w, *kernel, *stride, *padding)
                    .ok_or_else(|| format!("kernel {kernel} larger than input width {w}"))?;
                Ok(vec![oh, ow, *filters])
            }
            LayerSpec::TransposedConv2D { filters, kernel, stride, padding } => {
                let [h, w, _] = spatial(input)?;
                check_window(*filters, *kernel, *stride)?;
                if *padding == Padding::Same && *kernel < *stride {
                    return Err(format!("same-padded transposed conv needs kernel >= stride, got {kernel} < {stride}"));
                }
                Ok(vec![
                    transposed_extent(h, *kernel, *stride, *padding),
                    transposed_extent(w, *kernel, *stride, *padding),
                    *filters,
                ])
            }
            LayerSpec::MaxPool2D { size, stride } => {
                let [h, w, c] = spatial(input)?;
                check_window(1, *size, *stride)?;
                if h < *size || w < *size {
                    return Err(format!("pool window {size} larger than input {h}x{w}"));
                }
                Ok(vec![(h - size) / stride + 1, (w - size) / stride + 1, c])
            }
            LayerSpec::Dense { units } => {
                flat(input)?;
                if *units == 0 {
                    return Err("dense layer needs at least one unit".into());
                }
                Ok(vec![*units])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Reshape { shape } => {
                let from: usize = input.iter().product();
                let to: usize = shape.iter().product();
                if shape.is_empty() || from != to {
                    return Err(format!("cannot reshape {input:?} into {shape:?}"));
                }
                Ok(shape.clone())
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(format!("dropout rate must be in [0, 1), got {rate}"));
                }
                Ok(input.to_vec())
            }
            LayerSpec::ReLU | LayerSpec::Sigmoid => Ok(input.to_vec()),
            LayerSpec::Softmax => {
                flat(input)?;
                Ok(input.to_vec())
            }
        }
    }
}

fn check_window(filters: usize, kernel: usize, stride: usize) -> Result<(), String> {
    if filters == 0 || kernel == 0 || stride == 0 {
        return Err(format!("filters/kernel/stride must be positive, got {filters}/{kernel}/{stride}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_shapes() {
        let same = LayerSpec::Conv2D { filters: 16, kernel: 3, stride: 2, padding: Padding::Same };
        assert_eq!(same.output_shape(&[28, 28, 1]).unwrap(), vec![14, 14, 16]);
        assert_eq!(same.output_shape(&[7, 7, 1]).unwrap(), vec![4, 4, 16]);
        let valid = LayerSpec::Conv2D { filters: 1, kernel: 2, stride: 1, padding: Padding::Valid };
        assert_eq!(valid.output_shape(&[2, 2, 1]).unwrap(), vec![1, 1, 1]);
        assert!(valid.output_shape(&[1, 3, 1]).is_err());
        assert!(valid.output_shape(&[4]).is_err());
    }

    #[test]
    fn transposed_mirrors_conv() {
        let t = LayerSpec::TransposedConv2D { filters: 1, kernel: 3, stride: 2, padding: Padding::Same };
        assert_eq!(t.output_shape(&[14, 14, 16]).unwrap(), vec![28, 28, 1]);
        let v = LayerSpec::TransposedConv2D { filters: 2, kernel: 3, stride: 1, padding: Padding::Valid };
        assert_eq!(v.output_shape(&[2, 2, 1]).unwrap(), vec![4, 4, 2]);
    }

    #[test]
    fn pool_and_flat_shapes() {
        let p = LayerSpec::MaxPool2D { size: 2, stride: 2 };
        assert_eq!(p.output_shape(&[7, 7, 64]).unwrap(), vec![3, 3, 64]);
        assert_eq!(LayerSpec::Flatten.output_shape(&[3, 3, 64]).unwrap(), vec![576]);
        assert!(LayerSpec::Dense { units: 4 }.output_shape(&[2, 2]).is_err());
        assert!(LayerSpec::Softmax.output_shape(&[2, 5]).is_err());
        let r = LayerSpec::Reshape { shape: vec![7, 7, 32] };
        assert!(r.output_shape(&[1568]).is_ok());
        assert!(r.output_shape(&[1500]).is_err());
    }

    #[test]
    fn dropout_rate_bounds() {
        assert!(LayerSpec::Dropout { rate: 1.0 }.output_shape(&[4]).is_err());
        assert!(LayerSpec::Dropout { rate: -0.1 }.output_shape(&[4]).is_err());
        assert!(LayerSpec::Dropout { rate: 0.0 }.output_shape(&[4]).is_ok());
    }

    #[test]
    fn kind_tags_roundtrip() {
        for k in LayerKind::ALL {
            assert_eq!(LayerKind::from_tag(k.tag()), Some(k));
        }
        assert_eq!(LayerKind::from_tag(200), None);
    }
}
