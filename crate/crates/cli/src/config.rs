//! Run configuration: a TOML file whose every key has a default, plus
//! command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use watchdog_core::experiment::{DataPaths, RunSettings};
use watchdog_core::models::{AutoencoderConfig, ClassifierConfig, TrainHyper};
use watchdog_core::nn::OptimizerKind;
use watchdog_core::watchdog::{ScoreDefinition, ThresholdPolicy};

use crate::failure::Failure;

/// Environment variable that overrides the configured output directory.
pub const OUT_DIR_ENV: &str = "WATCHDOG_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Training seeds; one autoencoder/classifier pair per seed.
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub data: DataSection,
    pub autoencoder: AutoencoderSection,
    pub classifier: ClassifierSection,
    pub watchdog: WatchdogSection,
    pub evaluation: EvaluationSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            out_dir: PathBuf::from("runs/default"),
            data: DataSection::default(),
            autoencoder: AutoencoderSection::default(),
            classifier: ClassifierSection::default(),
            watchdog: WatchdogSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Directory holding `mnist/` and `fashion/` with the canonical gzipped IDX names.
    pub dir: PathBuf,
    pub digit_train_images: Option<PathBuf>,
    pub digit_train_labels: Option<PathBuf>,
    pub digit_test_images: Option<PathBuf>,
    pub digit_test_labels: Option<PathBuf>,
    pub fashion_test_images: Option<PathBuf>,
    pub fashion_test_labels: Option<PathBuf>,
    /// Seed of the shared 50,000/10,000 train/validation split.
    pub split_seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data"),
            digit_train_images: None,
            digit_train_labels: None,
            digit_test_images: None,
            digit_test_labels: None,
            fashion_test_images: None,
            fashion_test_labels: None,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSection {
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub waist: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for AutoencoderSection {
    fn default() -> Self {
        let c = AutoencoderConfig::default();
        let h = TrainHyper::autoencoder();
        Self {
            filters: c.filters,
            kernel: c.kernel,
            stride: c.stride,
            waist: c.waist,
            epochs: h.epochs,
            batch_size: h.batch_size,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSection {
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub pool: usize,
    pub dense_head: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierSection {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        let h = TrainHyper::classifier();
        Self {
            filters: c.filters,
            kernel: c.kernel,
            pool: c.pool,
            dense_head: c.dense_head,
            dropout: c.dropout,
            epochs: h.epochs,
            batch_size: h.batch_size,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WatchdogSection {
    /// `root_sum_squared` or `root_mean_squared`.
    pub score: String,
    /// Fraction of validation digits the calibrated τ must accept.
    pub target_tpr: f64,
    /// Fixed τ; takes precedence over `target_tpr` when set.
    pub tau: Option<f64>,
}

impl Default for WatchdogSection {
    fn default() -> Self {
        Self { score: ScoreDefinition::default().as_str().into(), target_tpr: 0.95, tau: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// FPR grid points for seed-averaged curves.
    pub grid: usize,
    /// Thresholds in the unrecognized-image table, spread over the score range.
    pub table_points: usize,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { grid: watchdog_core::evaluation::DEFAULT_GRID, table_points: 281 }
    }
}

/// Command-line values that replace configured ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tau: Option<f64>,
    pub target_tpr: Option<f64>,
    pub epochs: Option<usize>,
}

/// A validated configuration with paths resolved.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    /// The config file's text, verbatim (empty when running on defaults).
    pub source: String,
    pub paths: DataPaths,
    pub out_dir: PathBuf,
    pub settings: RunSettings,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::usage(format!("invalid config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.out {
            self.out_dir = out.clone();
        }
        if let Some(seed) = o.seed {
            self.seeds = vec![seed];
        }
        if let Some(t) = o.target_tpr {
            self.watchdog.target_tpr = t;
            self.watchdog.tau = None;
        }
        if let Some(tau) = o.tau {
            self.watchdog.tau = Some(tau);
        }
        if let Some(e) = o.epochs {
            self.autoencoder.epochs = e;
            self.classifier.epochs = e;
        }
    }

    pub fn policy(&self) -> ThresholdPolicy {
        match self.watchdog.tau {
            Some(tau) => ThresholdPolicy::Fixed(tau),
            None => ThresholdPolicy::TargetTpr(self.watchdog.target_tpr),
        }
    }

    fn settings(&self) -> Result<RunSettings, Failure> {
        let a = &self.autoencoder;
        let c = &self.classifier;
        for (name, lr) in [("autoencoder", a.learning_rate), ("classifier", c.learning_rate)] {
            if !(lr.is_finite() && lr > 0.0) {
                return Err(Failure::usage(format!("{name}.learning_rate must be positive, got {lr}")));
            }
        }
        let t = self.watchdog.target_tpr;
        if self.watchdog.tau.is_none() && !(t > 0.0 && t <= 1.0) {
            return Err(Failure::usage(format!("watchdog.target_tpr must be in (0, 1], got {t}")));
        }
        let autoencoder = AutoencoderConfig {
            input_shape: [28, 28, 1],
            filters: a.filters.clone(),
            kernel: a.kernel,
            stride: a.stride,
            waist: a.waist,
        };
        let classifier = ClassifierConfig {
            input_shape: [28, 28, 1],
            filters: c.filters.clone(),
            kernel: c.kernel,
            pool: c.pool,
            dense_head: c.dense_head,
            dropout: c.dropout,
            classes: 10,
        };
        // surface architecture errors now rather than after loading data
        autoencoder.specs()?;
        classifier.specs()?;
        Ok(RunSettings {
            autoencoder,
            classifier,
            autoencoder_hyper: TrainHyper {
                epochs: a.epochs,
                batch_size: a.batch_size,
                optimizer: OptimizerKind::adam(a.learning_rate),
                ..TrainHyper::autoencoder()
            },
            classifier_hyper: TrainHyper {
                epochs: c.epochs,
                batch_size: c.batch_size,
                optimizer: OptimizerKind::adam(c.learning_rate),
                ..TrainHyper::classifier()
            },
            score_definition: self.watchdog.score.parse()?,
            policy: self.policy(),
            grid: self.evaluation.grid,
            table_points: self.evaluation.table_points,
        })
    }
}

/// Loads `config_path` (or defaults), applies overrides and the output-directory
/// environment override, and validates the result.
///
/// Relative paths in a config file are taken relative to the file's directory;
/// with no file, relative to the working directory. Output-directory precedence:
/// `--out`, then the environment variable, then the config.
pub fn resolve(
    config_path: Option<&Path>,
    overrides: &Overrides,
    env_out: Option<PathBuf>,
) -> Result<Resolved, Failure> {
    let (mut config, source, base) = match config_path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Failure::usage(format!("cannot read config {}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (RunConfig::parse(&text)?, text, base)
        }
        None => (RunConfig::default(), String::new(), PathBuf::new()),
    };
    // --out and the environment are relative to the working directory, the config's own value to the file
    let out_from_file = overrides.out.is_none() && env_out.is_none() && config_path.is_some();
    if overrides.out.is_none() {
        if let Some(env) = env_out {
            config.out_dir = env;
        }
    }
    config.apply(overrides);
    if config.seeds.is_empty() {
        return Err(Failure::usage("seed list is empty"));
    }
    let settings = config.settings()?;
    let at = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let d = &config.data;
    let canonical = DataPaths::under(at(&d.dir));
    let pick = |explicit: &Option<PathBuf>, default: PathBuf| explicit.as_deref().map(at).unwrap_or(default);
    let paths = DataPaths {
        digit_train_images: pick(&d.digit_train_images, canonical.digit_train_images.clone()),
        digit_train_labels: pick(&d.digit_train_labels, canonical.digit_train_labels.clone()),
        digit_test_images: pick(&d.digit_test_images, canonical.digit_test_images.clone()),
        digit_test_labels: pick(&d.digit_test_labels, canonical.digit_test_labels.clone()),
        fashion_test_images: pick(&d.fashion_test_images, canonical.fashion_test_images.clone()),
        fashion_test_labels: pick(&d.fashion_test_labels, canonical.fashion_test_labels.clone()),
    };
    let out_dir = if out_from_file { at(&config.out_dir) } else { config.out_dir.clone() };
    Ok(Resolved { config, source, paths, out_dir, settings })
}

impl Resolved {
    /// Fails with a usage error unless every data file exists.
    pub fn require_data(&self) -> Result<(), Failure> {
        let missing = self.paths.missing();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Failure::usage(format!(
                "missing data files: {}",
                missing.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
            )))
        }
    }
}
