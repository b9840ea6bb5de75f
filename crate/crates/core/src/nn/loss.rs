use crate::scalar::Scalar;

/// Predicted probabilities are clamped to `[PROB_EPSILON, 1 - PROB_EPSILON]`
/// before taking logarithms.
pub const PROB_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Mean of squared differences over every element of the batch.
    MeanSquaredError,
    /// `-sum(target * ln p)` averaged over the batch.
    CategoricalCrossEntropy,
}

impl LossKind {
    /// Loss value, accumulated in `f64`.
    pub fn value<T: Scalar>(self, pred: &[T], target: &[T], batch: usize) -> f64 {
        match self {
            LossKind::MeanSquaredError => {
                let sum: f64 = pred
                    .iter()
                    .zip(target)
                    .map(|(&p, &t)| {
                        let d = p.to_f64_lossy() - t.to_f64_lossy();
                        d * d
                    })
                    .sum();
                sum / pred.len().max(1) as f64
            }
            LossKind::CategoricalCrossEntropy => {
                let sum: f64 = pred
                    .iter()
                    .zip(target)
                    .map(|(&p, &t)| {
                        let t = t.to_f64_lossy();
                        if t == 0.0 {
                            0.0
                        } else {
                            -t * clamp_prob(p.to_f64_lossy()).ln()
                        }
                    })
                    .sum();
                sum / batch.max(1) as f64
            }
        }
    }

    /// Gradient of [`LossKind::value`] with respect to `pred`.
    pub fn gradient<T: Scalar>(self, pred: &[T], target: &[T], batch: usize) -> Vec<T> {
        match self {
            LossKind::MeanSquaredError => {
                let scale = T::from_f64_lossy(2.0 / pred.len().max(1) as f64);
                pred.iter().zip(target).map(|(&p, &t)| scale * (p - t)).collect()
            }
            LossKind::CategoricalCrossEntropy => {
                let inv_batch = 1.0 / batch.max(1) as f64;
                pred.iter()
                    .zip(target)
                    .map(|(&p, &t)| {
                        let p = p.to_f64_lossy();
                        let inside = (PROB_EPSILON..=1.0 - PROB_EPSILON).contains(&p);
                        if inside {
                            T::from_f64_lossy(-t.to_f64_lossy() / p * inv_batch)
                        } else {
                            T::zero()
                        }
                    })
                    .collect()
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::MeanSquaredError => "mse",
            LossKind::CategoricalCrossEntropy => "categorical_crossentropy",
        }
    }
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPSILON, 1.0 - PROB_EPSILON)
}
