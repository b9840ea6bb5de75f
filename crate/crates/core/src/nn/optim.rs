use super::network::Network;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Parameter update rule and its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    /// `w -= lr * g`
    Sgd { learning_rate: f64 },
    /// Adaptive moment estimation with bias-corrected moments.
    Adam { learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn adam(learning_rate: f64) -> Self {
        OptimizerKind::Adam { learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerKind::Sgd { learning_rate } | OptimizerKind::Adam { learning_rate, .. } => learning_rate,
        }
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

/// Optimizer state (moment estimates) for one network.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    kind: OptimizerKind,
    steps: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(kind: OptimizerKind) -> Self {
        Self { kind, steps: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update in place. Nothing is modified if any gradient is
    /// misshapen or non-finite.
    pub fn step(&mut self, network: &mut Network<T>, grads: &[Tensor<T>]) -> Result<()> {
        let mut params = network.parameters_mut();
        if params.len() != grads.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameter tensors", grads.len(), params.len())));
        }
        for ((id, p), g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::Shape(format!(
                    "gradient for layer {} {} has shape {:?}, parameter has {:?}",
                    id.layer,
                    id.name,
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient { layer: id.layer, param: id.name });
            }
        }

        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd { learning_rate } => {
                let lr = T::from_f64_lossy(learning_rate);
                for ((_, p), g) in params.iter_mut().zip(grads) {
                    for (w, &d) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam { learning_rate, beta1, beta2, epsilon } => {
                if self.first.is_empty() {
                    self.first = grads.iter().map(|g| vec![T::zero(); g.len()]).collect();
                    self.second = self.first.clone();
                }
                let t = self.steps as i32;
                // bias corrections folded into the step size
                let step = learning_rate * (1.0 - beta2.powi(t)).sqrt() / (1.0 - beta1.powi(t));
                let eps_hat = T::from_f64_lossy(epsilon * (1.0 - beta2.powi(t)).sqrt());
                let (b1, b2, step) = (T::from_f64_lossy(beta1), T::from_f64_lossy(beta2), T::from_f64_lossy(step));
                let one = T::one();
                for (((_, p), g), (m, v)) in
                    params.iter_mut().zip(grads).zip(self.first.iter_mut().zip(self.second.iter_mut()))
                {
                    for (((w, &d), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *m = b1 * *m + (one - b1) * d;
                        *v = b2 * *v + (one - b2) * d * d;
                        *w -= step * *m / (v.sqrt() + eps_hat);
                    }
                }
            }
        }
        Ok(())
    }
}
