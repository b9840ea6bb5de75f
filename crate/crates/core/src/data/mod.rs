//! MNIST-format ingestion, splits and evaluation suites.

mod dataset;
mod idx;

pub use dataset::{
    build_eval_suite, make_train_split, one_hot, split, split_indices, Dataset, EvalSuite, Provenance, Role, EVAL_SIZE,
    TRAIN_SIZE, VALIDATION_SIZE,
};
pub use idx::{
    denormalize, encode_idx_images, encode_idx_labels, inflate_if_gzip, load_idx_images, load_idx_labels, normalize,
    parse_idx_images, parse_idx_labels, read_maybe_gzip, RawImages, IMAGES_MAGIC, LABELS_MAGIC,
};
