use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Role};
use crate::error::{Error, Result};
use crate::nn::{LossKind, Network, Optimizer, OptimizerKind};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Samples per inference chunk during validation.
const EVAL_CHUNK: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    /// `MeanSquaredError` trains to reconstruct the input;
    /// `CategoricalCrossEntropy` trains against one-hot labels.
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl TrainHyper {
    pub fn autoencoder() -> Self {
        Self {
            epochs: 10,
            batch_size: 128,
            loss: LossKind::MeanSquaredError,
            optimizer: OptimizerKind::default(),
            seed: 0,
        }
    }

    pub fn classifier() -> Self {
        Self { epochs: 5, loss: LossKind::CategoricalCrossEntropy, ..Self::autoencoder() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub hyper: TrainHyper,
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    /// `epoch,train_loss,val_loss[,val_accuracy],seconds`
    pub fn to_csv(&self) -> String {
        let with_acc = self.epochs.iter().any(|e| e.val_accuracy.is_some());
        let mut out = String::from(if with_acc {
            "epoch,train_loss,val_loss,val_accuracy,seconds\n"
        } else {
            "epoch,train_loss,val_loss,seconds\n"
        });
        for e in &self.epochs {
            let _ = write!(out, "{},{},{}", e.epoch, e.train_loss, e.val_loss);
            if with_acc {
                let _ = write!(out, ",{}", e.val_accuracy.unwrap_or(f64::NAN));
            }
            let _ = writeln!(out, ",{:.3}", e.seconds);
        }
        out
    }
}

fn targets<T: Scalar>(data: &Dataset<T>, loss: LossKind, classes: usize) -> Result<Tensor<T>> {
    match loss {
        LossKind::MeanSquaredError => Ok(data.images().clone()),
        LossKind::CategoricalCrossEntropy => data.one_hot(classes),
    }
}

/// Inference-mode loss (and accuracy for cross-entropy) over a whole dataset.
pub fn evaluate<T: Scalar>(network: &Network<T>, data: &Dataset<T>, loss: LossKind) -> Result<(f64, Option<f64>)> {
    let classes = network.output_shape().iter().product();
    let target = targets(data, loss, classes)?;
    let n = data.len();
    if n == 0 {
        return Err(Error::Empty("evaluation dataset"));
    }
    let (mut total, mut correct) = (0.0, 0usize);
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let pred = network.infer(&data.images().slice_batch(start, end))?;
        let t = target.slice_batch(start, end);
        total += loss.value(pred.data(), t.data(), end - start) * (end - start) as f64;
        if loss == LossKind::CategoricalCrossEntropy {
            correct += pred.argmax_rows().iter().zip(t.argmax_rows()).filter(|(a, b)| *a == b).count();
        }
        start = end;
    }
    let accuracy = (loss == LossKind::CategoricalCrossEntropy).then(|| correct as f64 / n as f64);
    Ok((total / n as f64, accuracy))
}

/// Mini-batch training; deterministic for a fixed seed.
pub fn train<T: Scalar>(
    network: Network<T>,
    train: &Dataset<T>,
    validation: &Dataset<T>,
    hyper: &TrainHyper,
) -> Result<(Network<T>, TrainReport)> {
    train_with_progress(network, train, validation, hyper, |_| {})
}

pub fn train_with_progress<T: Scalar>(
    mut network: Network<T>,
    train: &Dataset<T>,
    validation: &Dataset<T>,
    hyper: &TrainHyper,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(Network<T>, TrainReport)> {
    if train.role() != Role::Train || validation.role() != Role::Validation {
        return Err(Error::Config(format!(
            "expected train/validation datasets, got {:?}/{:?}",
            train.role(),
            validation.role()
        )));
    }
    if hyper.batch_size == 0 {
        return Err(Error::Config("batch size must be positive".into()));
    }
    let mut report = TrainReport { hyper: *hyper, epochs: Vec::with_capacity(hyper.epochs) };
    if hyper.epochs == 0 {
        return Ok((network, report));
    }
    if train.is_empty() {
        return Err(Error::Empty("training dataset"));
    }

    let classes = network.output_shape().iter().product();
    let target = targets(train, hyper.loss, classes)?;
    let mut optimizer = Optimizer::new(hyper.optimizer);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    network.reseed_dropout(hyper.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..hyper.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        for (batch_idx, idx) in order.chunks(hyper.batch_size).enumerate() {
            let x = train.images().select(idx);
            let t = target.select(idx);
            let (loss, grads) = match network.backward(&x, &t, hyper.loss) {
                Ok(r) => r,
                Err(Error::NonFinite(_) | Error::NonFiniteGradient { .. }) => {
                    return Err(Error::Diverged { epoch, batch: batch_idx, loss: f64::NAN })
                }
                Err(e) => return Err(e),
            };
            optimizer.step(&mut network, &grads)?;
            loss_sum += loss * idx.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch, batch: order.len().div_ceil(hyper.batch_size), loss: train_loss });
        }
        let (val_loss, val_accuracy) =
            if validation.is_empty() { (f64::NAN, None) } else { evaluate(&network, validation, hyper.loss)? };
        let stats = EpochStats {
            epoch: epoch + 1,
            train_loss,
            val_loss,
            val_accuracy,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&stats);
        report.epochs.push(stats);
    }
    Ok((network, report))
}
