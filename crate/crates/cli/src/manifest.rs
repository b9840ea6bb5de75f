//! Run manifests and small JSON artifacts, all written atomically.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use watchdog_core::models::write_atomic;

use crate::failure::{Context, Failure};

/// One produced file, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// What a command ran with and what it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seeds: Vec<u64>,
    /// The effective configuration after overrides, as TOML.
    pub config: String,
    /// SHA-256 of the config file as given, if any.
    pub config_file_sha256: Option<String>,
    pub seconds: f64,
    pub seed_seconds: Vec<(u64, f64)>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` to `dir/rel` via a temporary file and rename, and records it.
#[derive(Debug)]
pub struct Outputs {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: Vec::new() }
    }

    pub fn write(&mut self, rel: impl AsRef<Path>, bytes: &[u8]) -> Result<PathBuf, Failure> {
        let path = self.dir.join(rel.as_ref());
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).context(format!("creating {}", parent.display()))?;
        }
        write_atomic(&path, bytes).context(format!("writing {}", path.display()))?;
        self.record(rel.as_ref(), bytes);
        Ok(path)
    }

    /// Records a file some other writer already produced.
    pub fn record(&mut self, rel: &Path, bytes: &[u8]) {
        let path = rel.to_string_lossy().replace('\\', "/");
        self.files.retain(|f| f.path != path);
        self.files.push(FileEntry { path, bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
    }

    pub fn merge(&mut self, other: Outputs) {
        for f in other.files {
            self.files.retain(|g| g.path != f.path);
            self.files.push(f);
        }
    }

    pub fn into_files(mut self) -> Vec<FileEntry> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.files
    }
}

impl Manifest {
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, Failure> {
        let path = out_dir.join(format!("manifest-{}.json", self.command));
        std::fs::create_dir_all(out_dir).context(format!("creating {}", out_dir.display()))?;
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&path, json.as_bytes()).context(format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Calibrated gate for one seed, as stored in `watchdog.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WatchdogFile {
    pub seed: u64,
    pub score_definition: String,
    pub tau: f64,
    pub max_score: f64,
    /// `target_tpr` or `fixed`.
    pub policy: String,
    pub target_tpr: Option<f64>,
    pub validation_count: usize,
    /// Fraction of validation digits accepted at `tau`.
    pub validation_acceptance: f64,
}

impl WatchdogFile {
    pub fn read(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).context(format!("reading {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| Failure::usage(format!("invalid {}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("watchdog file serializes")
    }
}
