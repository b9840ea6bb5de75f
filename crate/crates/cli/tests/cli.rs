//! End-to-end runs of the `watchdog` binary on small synthetic corpora.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;
use watchdog_core::data::{encode_idx_images, encode_idx_labels, RawImages, EVAL_SIZE, TRAIN_SIZE, VALIDATION_SIZE};

const SIDE: usize = 28;

/// Digits: a dark field with a bright bar whose row depends on the label.
/// Fashion: a bright, mottled field. Neither needs to look real.
fn synthetic(count: usize, fashion: bool) -> (RawImages, Vec<u8>) {
    let labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
    let mut pixels = vec![0u8; count * SIDE * SIDE];
    for (i, img) in pixels.chunks_exact_mut(SIDE * SIDE).enumerate() {
        let label = labels[i] as usize;
        for (p, v) in img.iter_mut().enumerate() {
            let (r, c) = (p / SIDE, p % SIDE);
            *v = if fashion {
                150 + ((r * 7 + c * 11 + i) % 100) as u8
            } else if r / 2 == label + 2 && (4..24).contains(&c) {
                230 + (i % 20) as u8
            } else {
                ((r + c + i) % 9) as u8
            };
        }
    }
    (RawImages { count, rows: SIDE, cols: SIDE, pixels }, labels)
}

struct Corpus {
    _dir: TempDir,
    root: PathBuf,
}

/// Written once per test binary: 60,000 training digits and 10,000 each of test digits and fashion.
fn corpus() -> &'static Corpus {
    static CORPUS: OnceLock<Corpus> = OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        for (stem, count, fashion) in
            [("train", TRAIN_SIZE + VALIDATION_SIZE, false), ("digits", EVAL_SIZE, false), ("fashion", EVAL_SIZE, true)]
        {
            let (images, labels) = synthetic(count, fashion);
            std::fs::write(root.join(format!("{stem}-images.idx")), encode_idx_images(&images)).unwrap();
            std::fs::write(root.join(format!("{stem}-labels.idx")), encode_idx_labels(&labels)).unwrap();
        }
        Corpus { _dir: dir, root }
    })
}

/// A small-architecture config over the synthetic corpus.
fn config(dir: &Path) -> PathBuf {
    let d = corpus().root.display();
    let text = format!(
        r#"seeds = [0]
out_dir = "out"

[data]
digit_train_images = "{d}/train-images.idx"
digit_train_labels = "{d}/train-labels.idx"
digit_test_images = "{d}/digits-images.idx"
digit_test_labels = "{d}/digits-labels.idx"
fashion_test_images = "{d}/fashion-images.idx"
fashion_test_labels = "{d}/fashion-labels.idx"

[autoencoder]
filters = [4]
waist = 8
epochs = 0
batch_size = 256

[classifier]
filters = [4]
dense_head = 0
epochs = 0
batch_size = 256

[evaluation]
grid = 101
table_points = 29
"#
    );
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn watchdog(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_watchdog"));
    cmd.args(args).env_remove("WATCHDOG_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("WATCHDOG_OUT_DIR", dir);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&watchdog(&[], None)), 2);
    assert_eq!(code(&watchdog(&["train", "--no-such-flag"], None)), 2);
    assert_eq!(code(&watchdog(&["guard", "--tau", "1", "--target-tpr", "0.9", "--image", "x"], None)), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[autoencoder]\nwaste = 3\n").unwrap();
    let o = watchdog(&["train", "--config", s(&bad)], None);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("waste"));
}

#[test]
fn missing_data_exits_2_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "out_dir = \"out\"\n[data]\ndir = \"nowhere\"\n").unwrap();
    for command in ["train", "calibrate", "evaluate"] {
        let o = watchdog(&[command, "--config", s(&cfg)], None);
        assert_eq!(code(&o), 2, "{command}");
        assert!(!dir.path().join("out").exists(), "{command} wrote output");
    }
}

#[test]
fn train_guard_score_calibrate_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let out = dir.path().join("out");
    let c = s(&cfg);

    let o = watchdog(&["train", "--config", c], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let seed = out.join("seed-0");
    for f in ["autoencoder.wdnn", "classifier.wdnn", "autoencoder_report.csv", "classifier_report.csv", "watchdog.json"]
    {
        assert!(seed.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest-train.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 5);
    for f in files {
        let bytes = std::fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
    }

    // one synthetic digit as raw bytes
    let (images, _) = synthetic(1, false);
    let image = dir.path().join("digit.raw");
    std::fs::write(&image, &images.pixels).unwrap();
    let i = s(&image);

    let o = watchdog(&["guard", "--config", c, "--image", i, "--tau", "28"], None);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).starts_with("ACCEPT label="), "{}", stdout(&o));
    let o = watchdog(&["guard", "--config", c, "--image", i, "--tau", "0"], None);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).starts_with("REJECT score="), "{}", stdout(&o));
    assert!(matches!(code(&watchdog(&["guard", "--config", c, "--image", i], None)), 0 | 1));
    assert_eq!(code(&watchdog(&["guard", "--config", c, "--image", i, "--tau", "29"], None)), 2);
    assert_eq!(code(&watchdog(&["guard", "--config", c, "--image", s(&cfg), "--tau", "1"], None)), 2);

    let o = watchdog(&["score", "--config", c, "--dataset", "fashion-test"], None);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(seed.join("scores-fashion-test.csv")).unwrap();
    assert_eq!(csv.lines().count(), EVAL_SIZE + 1);
    assert!(csv.starts_with("index,score,provenance,label,accepted\n"));

    let empty = dir.path().join("empty.idx");
    std::fs::write(&empty, encode_idx_images(&RawImages { count: 0, rows: SIDE, cols: SIDE, pixels: vec![] })).unwrap();
    assert_eq!(code(&watchdog(&["score", "--config", c, "--images", s(&empty)], None)), 2);

    let o = watchdog(&["calibrate", "--config", c, "--target-tpr", "0.5"], None);
    assert_eq!(code(&o), 0);
    let w: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(seed.join("watchdog.json")).unwrap()).unwrap();
    assert_eq!(w["target_tpr"], 0.5);
    assert!(w["validation_acceptance"].as_f64().unwrap() >= 0.5);

    let o = watchdog(&["evaluate", "--config", c], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "seed-0/roc_watchdog_digits-vs-fashion_seed-0.csv",
        "seed-0/roc_classifier_mixed_guarded_seed-0.csv",
        "seed-0/records_mixed_seed-0.csv",
        "averaged/roc_classifier_mixed_unguarded_averaged.csv",
        "averaged/unrecognized_averaged.csv",
        "averaged/fig_watchdog_roc.svg",
        "averaged/fig_classifier_digits_roc.svg",
        "averaged/fig_classifier_mixed_roc.svg",
        "averaged/fig_unrecognized.svg",
        "averaged/summary.json",
        "manifest-evaluate.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let records = std::fs::read_to_string(seed.join("records_mixed_seed-0.csv")).unwrap();
    assert_eq!(records.lines().count(), 2 * EVAL_SIZE + 1);
}

#[test]
fn parallel_and_sequential_training_write_identical_models() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let text = std::fs::read_to_string(&cfg).unwrap().replace("seeds = [0]", "seeds = [0, 1]");
    std::fs::write(&cfg, text).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let common = ["train", "--config", s(&cfg), "--epochs", "1"];
    // the environment sets the first output directory, --out the second
    let o = watchdog(&[&common[..], &["--parallel-seeds", "2"]].concat(), Some(&a));
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = watchdog(&[&common[..], &["--out", s(&b)]].concat(), Some(&dir.path().join("ignored")));
    assert_eq!(code(&o), 0);
    assert!(!dir.path().join("ignored").exists());
    for f in ["seed-0/autoencoder.wdnn", "seed-0/classifier.wdnn", "seed-1/autoencoder.wdnn", "seed-1/watchdog.json"] {
        let (x, y) = (std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
        assert!(x == y, "{f} differs between runs");
    }
    assert!(
        std::fs::read(a.join("seed-0/autoencoder.wdnn")).unwrap()
            != std::fs::read(a.join("seed-1/autoencoder.wdnn")).unwrap()
    );
}

#[test]
fn divergent_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("waist = 8\nepochs = 0", "waist = 8\nepochs = 1\nlearning_rate = 1e300");
    std::fs::write(&cfg, text).unwrap();
    let o = watchdog(&["train", "--config", s(&cfg)], None);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}
