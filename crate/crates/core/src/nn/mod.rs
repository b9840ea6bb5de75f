//! Sequential neural networks with reverse-mode gradients.

mod conv;
mod gradcheck;
mod layer;
mod loss;
mod network;
mod optim;
mod spec;

pub use gradcheck::{grad_check, GradCheckReport};
pub use loss::{LossKind, PROB_EPSILON};
pub use network::{Mode, Network, ParamId};
pub use optim::{Optimizer, OptimizerKind};
pub use spec::{LayerKind, LayerSpec, Padding};
