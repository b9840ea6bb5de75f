pub mod data;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod models;
pub mod nn;
pub mod scalar;
pub mod tensor;
pub mod watchdog;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Single-precision instantiations used for training and scoring.
pub type Tensor32 = Tensor<f32>;
pub type Network32 = nn::Network<f32>;
pub type Dataset32 = data::Dataset<f32>;
pub type WatchdogModel32 = watchdog::WatchdogModel<f32>;

/// Double-precision instantiations, used where accuracy matters more than speed (gradient checks).
pub type Tensor64 = Tensor<f64>;
pub type Network64 = nn::Network<f64>;
pub type Dataset64 = data::Dataset<f64>;
pub type WatchdogModel64 = watchdog::WatchdogModel<f64>;
