use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layer::{Cache, Layer};
use super::loss::LossKind;
use super::spec::{LayerKind, LayerSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Dropout active, activations cached for backpropagation.
    Train,
    /// Deterministic; dropout disabled.
    Inference,
}

/// Identifies one parameter tensor: the owning layer and `"weight"` or `"bias"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId {
    pub layer: usize,
    pub name: &'static str,
}

const PARAM_NAMES: [&str; 2] = ["weight", "bias"];

// Stream used for dropout masks, kept apart from the initialization stream.
const DROPOUT_STREAM: u64 = 1;

/// Sequential network built from [`LayerSpec`]s.
#[derive(Debug, Clone)]
pub struct Network<T> {
    input_shape: Vec<usize>,
    layers: Vec<Layer<T>>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Network<T> {
    /// Builds the network and draws its initial parameters from `seed`.
    pub fn new(input_shape: Vec<usize>, specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input_shape.clone();
        for (i, spec) in specs.into_iter().enumerate() {
            let layer =
                Layer::new(spec, &shape, &mut init_rng).map_err(|message| Error::LayerShape { layer: i, message })?;
            shape = layer.out_shape.clone();
            layers.push(layer);
        }
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(DROPOUT_STREAM);
        Ok(Self { input_shape, layers, rng })
    }

    /// Rebuilds a network from stored specs and parameters.
    pub(crate) fn from_parts(input_shape: Vec<usize>, specs: Vec<LayerSpec>, params: Vec<Tensor<T>>) -> Result<Self> {
        let mut net = Self::new(input_shape, specs, 0)?;
        let slots = net.parameters_mut();
        if slots.len() != params.len() {
            return Err(Error::ModelFormat(format!(
                "expected {} parameter tensors, found {}",
                slots.len(),
                params.len()
            )));
        }
        for ((id, slot), p) in slots.into_iter().zip(params) {
            if slot.shape() != p.shape() {
                return Err(Error::ModelFormat(format!(
                    "layer {} {} has shape {:?}, expected {:?}",
                    id.layer,
                    id.name,
                    p.shape(),
                    slot.shape()
                )));
            }
            *slot = p;
        }
        Ok(net)
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.layers.last().expect("nonempty").out_shape
    }

    pub fn specs(&self) -> impl Iterator<Item = &LayerSpec> {
        self.layers.iter().map(|l| &l.spec)
    }

    pub fn kinds(&self) -> Vec<LayerKind> {
        self.specs().map(LayerSpec::kind).collect()
    }

    /// Per-sample output shape of every layer, in order.
    pub fn layer_shapes(&self) -> Vec<&[usize]> {
        self.layers.iter().map(|l| l.out_shape.as_slice()).collect()
    }

    pub fn parameters(&self) -> Vec<(ParamId, &Tensor<T>)> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| l.params.iter().zip(PARAM_NAMES).map(move |(p, name)| (ParamId { layer: i, name }, p)))
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<(ParamId, &mut Tensor<T>)> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                l.params.iter_mut().zip(PARAM_NAMES).map(move |(p, name)| (ParamId { layer: i, name }, p))
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|(_, p)| p.len()).sum()
    }

    /// Resets the dropout mask stream.
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(DROPOUT_STREAM);
    }

    pub(crate) fn dropout_rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub(crate) fn set_dropout_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    /// Converts parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input_shape: self.input_shape.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec.clone(),
                    in_shape: l.in_shape.clone(),
                    out_shape: l.out_shape.clone(),
                    geom: l.geom,
                    params: l.params.iter().map(Tensor::cast).collect(),
                })
                .collect(),
            rng: self.rng.clone(),
        }
    }

    /// Batch size of `input`, and whether it carried an explicit batch axis.
    fn batch_of(&self, input: &Tensor<T>) -> Result<(usize, bool)> {
        if input.shape() == self.input_shape.as_slice() {
            Ok((1, false))
        } else if input.shape().len() == self.input_shape.len() + 1
            && input.sample_shape() == self.input_shape.as_slice()
        {
            Ok((input.batch(), true))
        } else {
            Err(Error::LayerShape {
                layer: 0,
                message: format!("input shape {:?} does not match {:?}", input.shape(), self.input_shape),
            })
        }
    }

    fn wrap_output(&self, data: Vec<T>, batch: usize, batched: bool) -> Tensor<T> {
        let mut shape = Vec::with_capacity(self.output_shape().len() + 1);
        if batched {
            shape.push(batch);
        }
        shape.extend_from_slice(self.output_shape());
        Tensor::new(shape, data).expect("layer output matches declared shape")
    }

    fn run(&mut self, input: &Tensor<T>, mode: Mode, keep: bool) -> Result<(Vec<T>, Vec<Cache<T>>, usize, bool)> {
        let (batch, batched) = self.batch_of(input)?;
        let mut caches = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        let mut x = input.data().to_vec();
        for layer in &self.layers {
            let rng = (mode == Mode::Train).then_some(&mut self.rng);
            let (y, cache) = layer.forward(&x, batch, rng, keep);
            if keep {
                caches.push(cache);
            }
            x = y;
        }
        Ok((x, caches, batch, batched))
    }

    /// Forward pass. Train mode draws fresh dropout masks.
    pub fn forward(&mut self, input: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let (y, _, batch, batched) = self.run(input, mode, false)?;
        Ok(self.wrap_output(y, batch, batched))
    }

    /// Inference-mode forward pass; read-only, safe to share across threads.
    pub fn infer(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let (batch, batched) = self.batch_of(input)?;
        let mut x = input.data().to_vec();
        for layer in &self.layers {
            x = layer.forward(&x, batch, None, false).0;
        }
        Ok(self.wrap_output(x, batch, batched))
    }

    /// Inference over a large batch in chunks of `chunk` samples.
    pub fn infer_chunked(&self, input: &Tensor<T>, chunk: usize) -> Result<Tensor<T>> {
        let (batch, batched) = self.batch_of(input)?;
        if !batched || batch <= chunk {
            return self.infer(input);
        }
        let mut out = Vec::with_capacity(batch * self.output_shape().iter().product::<usize>());
        let mut start = 0;
        while start < batch {
            let end = (start + chunk).min(batch);
            out.extend(self.infer(&input.slice_batch(start, end))?.into_data());
            start = end;
        }
        Ok(self.wrap_output(out, batch, true))
    }

    /// Train-mode forward and backward pass.
    ///
    /// Returns the loss value and one gradient per parameter tensor, in the
    /// order of [`Network::parameters`].
    pub fn backward(&mut self, input: &Tensor<T>, target: &Tensor<T>, loss: LossKind) -> Result<(f64, Vec<Tensor<T>>)> {
        let (pred, caches, batch, _) = self.run(input, Mode::Train, true)?;
        if target.len() != pred.len() {
            return Err(Error::Shape(format!(
                "target has {} elements, network output has {}",
                target.len(),
                pred.len()
            )));
        }
        let value = loss.value(&pred, target.data(), batch);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("{} loss is {value}", loss.name())));
        }

        let mut last = self.layers.len();
        let mut grad = if loss == LossKind::CategoricalCrossEntropy && self.layers[last - 1].spec == LayerSpec::Softmax
        {
            // softmax + cross-entropy: gradient at the logits is (p - t) / batch
            last -= 1;
            let inv = T::from_f64_lossy(1.0 / batch as f64);
            pred.iter().zip(target.data()).map(|(&p, &t)| (p - t) * inv).collect()
        } else {
            loss.gradient(&pred, target.data(), batch)
        };

        let mut per_layer: Vec<Vec<Vec<T>>> = vec![Vec::new(); self.layers.len()];
        for i in (0..last).rev() {
            let layer = &self.layers[i];
            let need_input = self.layers[..i].iter().any(|l| !l.params.is_empty());
            let (dx, dparams) = layer.backward(&caches[i], &grad, batch, need_input);
            per_layer[i] = dparams;
            match dx {
                Some(dx) => grad = dx,
                None => break,
            }
        }

        let mut grads = Vec::new();
        for (layer, dparams) in self.layers.iter().zip(per_layer) {
            for (p, g) in layer.params.iter().zip(dparams) {
                grads.push(Tensor::new(p.shape().to_vec(), g)?);
            }
        }
        for ((id, _), g) in self.parameters().iter().zip(&grads) {
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { layer: id.layer, param: id.name });
            }
        }
        Ok((value, grads))
    }

    /// Loss of a train-mode forward pass without computing gradients.
    pub fn loss(&mut self, input: &Tensor<T>, target: &Tensor<T>, loss: LossKind) -> Result<f64> {
        let (pred, _, batch, _) = self.run(input, Mode::Train, false)?;
        Ok(loss.value(&pred, target.data(), batch))
    }
}
