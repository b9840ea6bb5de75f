use crate::error::{Error, Result};
use crate::nn::{LayerSpec, Network, Padding};
use crate::scalar::Scalar;

/// Convolutional autoencoder: strided conv encoder into a dense waist, and a
/// decoder that mirrors it with transposed convolutions.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderConfig {
    pub input_shape: [usize; 3],
    /// Encoder filter counts; the decoder uses them in reverse.
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    /// Bottleneck width.
    pub waist: usize,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self { input_shape: [28, 28, 1], filters: vec![16, 32], kernel: 3, stride: 2, waist: 64 }
    }
}

impl AutoencoderConfig {
    pub fn specs(&self) -> Result<Vec<LayerSpec>> {
        let [h, w, c] = self.input_shape;
        let pixels = h * w * c;
        if self.filters.is_empty() {
            return Err(Error::Config("autoencoder needs at least one conv layer".into()));
        }
        if self.waist == 0 || self.waist >= pixels {
            return Err(Error::Config(format!("waist must be in 1..{pixels}, got {}", self.waist)));
        }

        let conv =
            |filters| LayerSpec::Conv2D { filters, kernel: self.kernel, stride: self.stride, padding: Padding::Same };
        let tconv = |filters| LayerSpec::TransposedConv2D {
            filters,
            kernel: self.kernel,
            stride: self.stride,
            padding: Padding::Same,
        };

        let mut specs = Vec::new();
        let mut shape = self.input_shape.to_vec();
        for &f in &self.filters {
            let s = conv(f);
            shape = s.output_shape(&shape).map_err(Error::Config)?;
            specs.push(s);
            specs.push(LayerSpec::ReLU);
        }
        let encoded: usize = shape.iter().product();
        specs.extend([
            LayerSpec::Flatten,
            LayerSpec::Dense { units: self.waist },
            LayerSpec::ReLU,
            LayerSpec::Dense { units: encoded },
            LayerSpec::ReLU,
            LayerSpec::Reshape { shape: shape.clone() },
        ]);
        let mut decoder_filters: Vec<usize> = self.filters.iter().rev().skip(1).copied().collect();
        decoder_filters.push(c);
        for (i, &f) in decoder_filters.iter().enumerate() {
            let s = tconv(f);
            shape = s.output_shape(&shape).map_err(Error::Config)?;
            specs.push(s);
            specs.push(if i + 1 == decoder_filters.len() { LayerSpec::Sigmoid } else { LayerSpec::ReLU });
        }
        if shape != self.input_shape {
            return Err(Error::Config(format!(
                "decoder output {:?} does not mirror input {:?}",
                shape, self.input_shape
            )));
        }
        Ok(specs)
    }
}

/// Stacked conv + max-pool stages, dropout and a softmax head.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierConfig {
    pub input_shape: [usize; 3],
    /// One conv + ReLU + max-pool stage per entry.
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    /// Width of a hidden dense layer before dropout; 0 omits it.
    pub dense_head: usize,
    pub dropout: f64,
    pub classes: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            input_shape: [28, 28, 1],
            filters: vec![32, 64, 64],
            kernel: 3,
            pool: 2,
            dense_head: 0,
            dropout: 0.5,
            classes: 10,
        }
    }
}

impl ClassifierConfig {
    pub fn specs(&self) -> Result<Vec<LayerSpec>> {
        if self.filters.is_empty() {
            return Err(Error::Config("classifier needs at least one conv stage".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout rate must be in [0, 1), got {}", self.dropout)));
        }
        if self.classes < 2 {
            return Err(Error::Config("classifier needs at least two classes".into()));
        }
        let mut specs = Vec::new();
        for &f in &self.filters {
            specs.push(LayerSpec::Conv2D { filters: f, kernel: self.kernel, stride: 1, padding: Padding::Same });
            specs.push(LayerSpec::ReLU);
            specs.push(LayerSpec::MaxPool2D { size: self.pool, stride: self.pool });
        }
        specs.push(LayerSpec::Flatten);
        if self.dense_head > 0 {
            specs.push(LayerSpec::Dense { units: self.dense_head });
            specs.push(LayerSpec::ReLU);
        }
        specs.push(LayerSpec::Dropout { rate: self.dropout });
        specs.push(LayerSpec::Dense { units: self.classes });
        specs.push(LayerSpec::Softmax);
        Ok(specs)
    }
}

pub fn build_autoencoder<T: Scalar>(config: &AutoencoderConfig, seed: u64) -> Result<Network<T>> {
    Network::new(config.input_shape.to_vec(), config.specs()?, seed).map_err(as_config_error)
}

pub fn build_classifier<T: Scalar>(config: &ClassifierConfig, seed: u64) -> Result<Network<T>> {
    Network::new(config.input_shape.to_vec(), config.specs()?, seed).map_err(as_config_error)
}

fn as_config_error(e: Error) -> Error {
    match e {
        Error::LayerShape { layer, message } => Error::Config(format!("layer {layer}: {message}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::LayerKind::*;
    use crate::tensor::Tensor;

    #[test]
    fn default_autoencoder_layer_sequence() {
        let net = build_autoencoder::<f32>(&AutoencoderConfig::default(), 0).unwrap();
        assert_eq!(
            net.kinds(),
            vec![
                Conv2D,
                ReLU,
                Conv2D,
                ReLU,
                Flatten,
                Dense,
                ReLU,
                Dense,
                ReLU,
                Reshape,
                TransposedConv2D,
                ReLU,
                TransposedConv2D,
                Sigmoid
            ]
        );
        assert_eq!(net.output_shape(), &[28, 28, 1]);
    }

    #[test]
    fn zero_image_reconstruction_in_unit_interval() {
        let net = build_autoencoder::<f32>(&AutoencoderConfig::default(), 0).unwrap();
        let y = net.infer(&Tensor::zeros(vec![28, 28, 1])).unwrap();
        assert_eq!(y.shape(), &[28, 28, 1]);
        assert!(y.data().iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn waist_must_compress() {
        let cfg = AutoencoderConfig { waist: 784, ..Default::default() };
        assert!(matches!(build_autoencoder::<f32>(&cfg, 0), Err(Error::Config(_))));
    }

    #[test]
    fn unmirrorable_input_rejected() {
        let cfg = AutoencoderConfig { input_shape: [7, 7, 1], waist: 8, ..Default::default() };
        assert!(build_autoencoder::<f32>(&cfg, 0).is_err());
    }

    #[test]
    fn classifier_has_three_pools_and_sums_to_one() {
        let net = build_classifier::<f32>(&ClassifierConfig::default(), 0).unwrap();
        assert_eq!(net.kinds().iter().filter(|&&k| k == MaxPool2D).count(), 3);
        assert_eq!(net.kinds().last(), Some(&Softmax));
        let x = Tensor::from_fn(vec![2, 28, 28, 1], |i| (i % 17) as f32 / 16.0);
        let y = net.infer(&x).unwrap();
        for i in 0..2 {
            let s: f32 = y.sample(i).iter().sum();
            assert!((s - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn degenerate_dropout_rejected() {
        let cfg = ClassifierConfig { dropout: 1.0, ..Default::default() };
        assert!(build_classifier::<f32>(&cfg, 0).is_err());
    }

    #[test]
    fn default_classifier_drops_out_between_flatten_and_output() {
        let kinds = build_classifier::<f32>(&ClassifierConfig::default(), 0).unwrap().kinds();
        assert_eq!(&kinds[kinds.len() - 4..], &[Flatten, Dropout, Dense, Softmax]);
    }

    #[test]
    fn dense_head_sits_before_dropout() {
        let cfg = ClassifierConfig { dense_head: 16, ..Default::default() };
        let kinds = build_classifier::<f32>(&cfg, 0).unwrap().kinds();
        assert_eq!(&kinds[kinds.len() - 6..], &[Flatten, Dense, ReLU, Dropout, Dense, Softmax]);
    }
}
