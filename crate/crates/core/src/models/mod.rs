//! The watchdog autoencoder and guarded classifier: builders, training, files.

mod builders;
mod file;
mod train;

pub use builders::{build_autoencoder, build_classifier, AutoencoderConfig, ClassifierConfig};
pub use file::{
    decode_model, encode_model, load_model, load_model_as, save_model, write_atomic, ModelKind, MODEL_MAGIC,
    MODEL_VERSION,
};
pub use train::{evaluate, train, train_with_progress, EpochStats, TrainHyper, TrainReport};
