//! IDX ingestion, splits and model files, including the real corpora when present.

use std::io::Write;
use std::path::PathBuf;

use flate2::write::GzEncoder;
use flate2::Compression;
use proptest::prelude::*;
use watchdog_core::data::{
    build_eval_suite, encode_idx_images, encode_idx_labels, inflate_if_gzip, make_train_split, parse_idx_images,
    parse_idx_labels, Dataset, Provenance, RawImages, Role, EVAL_SIZE, TRAIN_SIZE, VALIDATION_SIZE,
};
use watchdog_core::models::{
    build_autoencoder, build_classifier, encode_model, load_model, load_model_as, save_model, AutoencoderConfig,
    ClassifierConfig, ModelKind,
};
use watchdog_core::{Error, Tensor};

fn gzip(bytes: &[u8]) -> Vec<u8> {
    let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
    enc.write_all(bytes).unwrap();
    enc.finish().unwrap()
}

fn raw_images() -> impl Strategy<Value = RawImages> {
    (0usize..6, 1usize..6, 1usize..6).prop_flat_map(|(count, rows, cols)| {
        prop::collection::vec(any::<u8>(), count * rows * cols).prop_map(move |pixels| RawImages {
            count,
            rows,
            cols,
            pixels,
        })
    })
}

proptest! {
    #[test]
    fn idx_images_roundtrip_plain_and_gzipped(raw in raw_images(), zipped in any::<bool>()) {
        let mut bytes = encode_idx_images(&raw);
        if zipped {
            bytes = gzip(&bytes);
        }
        prop_assert_eq!(parse_idx_images(&inflate_if_gzip(bytes).unwrap()).unwrap(), raw);
    }

    #[test]
    fn idx_labels_roundtrip(labels in prop::collection::vec(0u8..10, 0..50)) {
        prop_assert_eq!(parse_idx_labels(&encode_idx_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn truncated_image_files_are_rejected(raw in raw_images(), cut in 1usize..8) {
        let bytes = encode_idx_images(&raw);
        let keep = bytes.len().saturating_sub(cut);
        prop_assume!(keep < bytes.len() && raw.count > 0);
        prop_assert!(
            matches!(parse_idx_images(&bytes[..keep]), Err(Error::Truncated { .. })),
            "cut {} bytes", cut
        );
    }
}

#[test]
fn saved_models_reload_with_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let ae = build_autoencoder::<f32>(&AutoencoderConfig::default(), 9).unwrap();
    let clf = build_classifier::<f32>(&ClassifierConfig::default(), 9).unwrap();
    let x = Tensor::from_fn(vec![3, 28, 28, 1], |i| ((i * 13) % 256) as f32 / 255.0);
    for (net, kind, name) in [(ae, ModelKind::Autoencoder, "ae.wdnn"), (clf, ModelKind::Classifier, "clf.wdnn")] {
        let path = dir.path().join(name);
        save_model(&net, kind, &path).unwrap();
        let back = load_model_as::<f32>(&path, kind).unwrap();
        let (a, b) = (net.infer(&x).unwrap(), back.infer(&x).unwrap());
        let bits = |t: &Tensor<f32>| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        // byte-identical re-encoding
        assert_eq!(std::fs::read(&path).unwrap(), encode_model(&back, kind));
    }
    // only the two model files remain; no temporaries left behind
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 2);
    assert!(matches!(
        load_model_as::<f32>(dir.path().join("ae.wdnn"), ModelKind::Classifier),
        Err(Error::ModelKind { .. })
    ));
}

#[test]
fn foreign_files_fail_on_magic() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("not-a-model");
    std::fs::write(&path, b"PK\x03\x04 some zip archive bytes").unwrap();
    assert!(matches!(load_model::<f32>(&path), Err(Error::Magic { .. })));
}

/// Directory holding `mnist/` and `fashion/`; `WATCHDOG_DATA_DIR` overrides the workspace `data/`.
fn data_dir() -> PathBuf {
    std::env::var_os("WATCHDOG_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn load(rel_images: &str, rel_labels: &str, provenance: Provenance, role: Role) -> Option<Dataset<f32>> {
    let dir = data_dir();
    let images = dir.join(rel_images);
    if !images.exists() {
        eprintln!("skipping: {} not found (run scripts/fetch_data.sh)", images.display());
        return None;
    }
    Some(Dataset::load(images, Some(&dir.join(rel_labels)), provenance, role).unwrap())
}

#[test]
fn real_corpora_have_canonical_sizes_and_split_cleanly() {
    let Some(train) = load(
        "mnist/train-images-idx3-ubyte.gz",
        "mnist/train-labels-idx1-ubyte.gz",
        Provenance::InDistribution,
        Role::Train,
    ) else {
        return;
    };
    assert_eq!(train.len(), TRAIN_SIZE + VALIDATION_SIZE);
    assert_eq!(train.images().sample_shape(), &[28, 28, 1]);
    let (a, b) = make_train_split(&train, 0).unwrap();
    assert_eq!((a.len(), b.len()), (TRAIN_SIZE, VALIDATION_SIZE));
    assert_eq!((a.role(), b.role()), (Role::Train, Role::Validation));

    let digits = load(
        "mnist/t10k-images-idx3-ubyte.gz",
        "mnist/t10k-labels-idx1-ubyte.gz",
        Provenance::InDistribution,
        Role::Evaluation,
    );
    let fashion = load(
        "fashion/t10k-images-idx3-ubyte.gz",
        "fashion/t10k-labels-idx1-ubyte.gz",
        Provenance::OutOfDistribution,
        Role::Evaluation,
    );
    if let (Some(d), Some(f)) = (digits, fashion) {
        let suite = build_eval_suite(d, f).unwrap();
        assert_eq!(suite.mixed.len(), 2 * EVAL_SIZE);
        assert_eq!(suite.mixed.filter_provenance(Provenance::InDistribution), suite.in_dist);
        assert_eq!(suite.mixed.filter_provenance(Provenance::OutOfDistribution), suite.out_dist);
        assert!(suite.mixed.images().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
