use super::loss::LossKind;
use super::network::Network;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Result of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter tensor index and element of the worst entry.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Maximum over all parameters of `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)`,
/// with numeric gradients from central differences of step `h`.
///
/// Dropout masks are held fixed: every forward pass replays the same mask stream.
pub fn grad_check<T: Scalar>(
    network: &Network<T>,
    input: &Tensor<T>,
    target: &Tensor<T>,
    loss: LossKind,
    h: f64,
) -> Result<GradCheckReport> {
    if h <= 0.0 {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let mut net = network.clone();
    let mask_stream = net.dropout_rng().clone();
    let (_, analytic) = net.backward(input, target, loss)?;

    let step = T::from_f64_lossy(h);
    let mut report = GradCheckReport { max_relative_error: 0.0, worst: (0, 0), checked: 0 };
    for (p, grad) in analytic.iter().enumerate() {
        for e in 0..grad.len() {
            let original = net.parameters()[p].1.data()[e];
            let mut eval = |value: T| -> Result<f64> {
                net.parameters_mut()[p].1.data_mut()[e] = value;
                net.set_dropout_rng(mask_stream.clone());
                net.loss(input, target, loss)
            };
            let plus = eval(original + step)?;
            let minus = eval(original - step)?;
            net.parameters_mut()[p].1.data_mut()[e] = original;

            let numeric = (plus - minus) / (2.0 * h);
            let a = grad.data()[e].to_f64_lossy();
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = (p, e);
            }
        }
    }
    Ok(report)
}
