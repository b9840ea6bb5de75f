//! End-to-end runs: load the corpora, train a seeded model pair, evaluate it,
//! and average curves across seeds.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{build_eval_suite, make_train_split, Dataset, EvalSuite, Provenance, Role};
use crate::error::Result;
use crate::evaluation::{
    average_rocs, classification_roc_from_predictions, roc_from_scores, threshold_grid, Orientation, RocCurve,
    UnrecognizedTable,
};
use crate::models::{
    build_autoencoder, build_classifier, train_with_progress, AutoencoderConfig, ClassifierConfig, EpochStats,
    TrainHyper, TrainReport,
};
use crate::nn::Network;
use crate::scalar::Scalar;
use crate::watchdog::{
    calibrate_threshold, predictions, Classifier, GuardedRecord, ScoreDefinition, ScoreSummary, ThresholdPolicy,
    WatchdogModel,
};

/// Locations of the six IDX files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPaths {
    pub digit_train_images: PathBuf,
    pub digit_train_labels: PathBuf,
    pub digit_test_images: PathBuf,
    pub digit_test_labels: PathBuf,
    pub fashion_test_images: PathBuf,
    pub fashion_test_labels: PathBuf,
}

impl DataPaths {
    /// Canonical gzipped file names under `dir/mnist` and `dir/fashion`.
    pub fn under(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            digit_train_images: d.join("mnist/train-images-idx3-ubyte.gz"),
            digit_train_labels: d.join("mnist/train-labels-idx1-ubyte.gz"),
            digit_test_images: d.join("mnist/t10k-images-idx3-ubyte.gz"),
            digit_test_labels: d.join("mnist/t10k-labels-idx1-ubyte.gz"),
            fashion_test_images: d.join("fashion/t10k-images-idx3-ubyte.gz"),
            fashion_test_labels: d.join("fashion/t10k-labels-idx1-ubyte.gz"),
        }
    }

    pub fn all(&self) -> [&Path; 6] {
        [
            &self.digit_train_images,
            &self.digit_train_labels,
            &self.digit_test_images,
            &self.digit_test_labels,
            &self.fashion_test_images,
            &self.fashion_test_labels,
        ]
    }

    pub fn missing(&self) -> Vec<&Path> {
        self.all().into_iter().filter(|p| !p.exists()).collect()
    }
}

/// Train/validation split of the digit training set plus the evaluation suite.
#[derive(Debug, Clone)]
pub struct ExperimentData<T> {
    pub train: Dataset<T>,
    pub validation: Dataset<T>,
    pub suite: EvalSuite<T>,
}

impl<T: Scalar> ExperimentData<T> {
    /// Loads all corpora; both networks share the split drawn with `split_seed`.
    pub fn load(paths: &DataPaths, split_seed: u64) -> Result<Self> {
        let full = Dataset::load(
            &paths.digit_train_images,
            Some(&paths.digit_train_labels),
            Provenance::InDistribution,
            Role::Train,
        )?;
        let (train, validation) = make_train_split(&full, split_seed)?;
        let digits = Dataset::load(
            &paths.digit_test_images,
            Some(&paths.digit_test_labels),
            Provenance::InDistribution,
            Role::Evaluation,
        )?;
        let fashion = Dataset::load(
            &paths.fashion_test_images,
            Some(&paths.fashion_test_labels),
            Provenance::OutOfDistribution,
            Role::Evaluation,
        )?;
        Ok(Self { train, validation, suite: build_eval_suite(digits, fashion)? })
    }
}

/// Architectures and training settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub autoencoder: AutoencoderConfig,
    pub classifier: ClassifierConfig,
    pub autoencoder_hyper: TrainHyper,
    pub classifier_hyper: TrainHyper,
    pub score_definition: ScoreDefinition,
    pub policy: ThresholdPolicy,
    /// Points of the averaging FPR grid.
    pub grid: usize,
    /// Points of the unrecognized-image threshold grid over the score range.
    pub table_points: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            autoencoder: AutoencoderConfig::default(),
            classifier: ClassifierConfig::default(),
            autoencoder_hyper: TrainHyper::autoencoder(),
            classifier_hyper: TrainHyper::classifier(),
            score_definition: ScoreDefinition::default(),
            policy: ThresholdPolicy::TargetTpr(0.95),
            grid: crate::evaluation::DEFAULT_GRID,
            table_points: 281,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub network: Network<T>,
    pub report: TrainReport,
    pub seconds: f64,
}

/// Builds the network for `seed` and trains it with `hyper.seed = seed`.
pub fn train_seeded<T: Scalar>(
    network: Network<T>,
    data: &ExperimentData<T>,
    hyper: &TrainHyper,
    seed: u64,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainedModel<T>> {
    let started = Instant::now();
    let hyper = TrainHyper { seed, ..*hyper };
    let (network, report) = train_with_progress(network, &data.train, &data.validation, &hyper, on_epoch)?;
    Ok(TrainedModel { network, report, seconds: started.elapsed().as_secs_f64() })
}

pub fn train_autoencoder<T: Scalar>(
    data: &ExperimentData<T>,
    settings: &RunSettings,
    seed: u64,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainedModel<T>> {
    train_seeded(build_autoencoder(&settings.autoencoder, seed)?, data, &settings.autoencoder_hyper, seed, on_epoch)
}

pub fn train_classifier<T: Scalar>(
    data: &ExperimentData<T>,
    settings: &RunSettings,
    seed: u64,
    on_epoch: impl FnMut(&EpochStats),
) -> Result<TrainedModel<T>> {
    train_seeded(build_classifier(&settings.classifier, seed)?, data, &settings.classifier_hyper, seed, on_epoch)
}

/// Everything measured for one seeded model pair.
#[derive(Debug, Clone)]
pub struct SeedEvaluation {
    pub seed: u64,
    pub tau: f64,
    pub validation_scores: Vec<f64>,
    pub digit_scores: Vec<f64>,
    pub fashion_scores: Vec<f64>,
    pub digit_summary: ScoreSummary,
    pub fashion_summary: ScoreSummary,
    /// Fraction of each evaluation set passing the gate.
    pub digit_acceptance: f64,
    pub fashion_acceptance: f64,
    pub watchdog: RocCurve,
    pub unguarded_in: RocCurve,
    pub unguarded_mixed: RocCurve,
    pub guarded_mixed: RocCurve,
    pub table: UnrecognizedTable,
    /// Per-sample gate decisions and predictions over the mixed set.
    pub records: Vec<GuardedRecord>,
}

/// Calibrates τ on validation scores, then scores and classifies the evaluation suite.
pub fn evaluate_seed<T: Scalar>(
    data: &ExperimentData<T>,
    autoencoder: &Network<T>,
    classifier: &impl Classifier<T>,
    settings: &RunSettings,
    seed: u64,
) -> Result<(WatchdogModel<T>, SeedEvaluation)> {
    let open = WatchdogModel::new(autoencoder.clone(), settings.score_definition, 0.0)?;
    let validation_scores = open.score_dataset(&data.validation)?.scores();
    let tau = calibrate_threshold(&validation_scores, settings.policy)?;
    let model = open.with_threshold(tau)?;

    let digits = model.score_dataset(&data.suite.in_dist)?;
    let fashion = model.score_dataset(&data.suite.out_dist)?;
    let (digit_scores, fashion_scores) = (digits.scores(), fashion.scores());
    let summary = |s: Option<ScoreSummary>| s.ok_or(crate::Error::Empty("evaluation set"));
    let watchdog = {
        let mut c = roc_from_scores(&digit_scores, &fashion_scores, Orientation::LowerIsPositive)?;
        c.positive_definition = "in_distribution (accepted: score <= threshold)".into();
        c
    };

    // one classifier pass over the mixed set serves all three classification curves
    let mixed = &data.suite.mixed;
    let labels = mixed.labels().ok_or(crate::Error::Empty("evaluation labels"))?;
    let preds = predictions(&classifier.probabilities(mixed.images())?);
    let gate: Vec<bool> = digit_scores.iter().chain(&fashion_scores).map(|&s| model.accepts(s)).collect();
    let n_in = data.suite.in_dist.len();
    let unguarded_in =
        classification_roc_from_predictions(&mixed.provenance()[..n_in], &labels[..n_in], &preds[..n_in], None)?;
    let unguarded_mixed = classification_roc_from_predictions(mixed.provenance(), labels, &preds, None)?;
    let guarded_mixed = classification_roc_from_predictions(mixed.provenance(), labels, &preds, Some(&gate))?;

    let thresholds = threshold_grid(model.max_score(), settings.table_points);
    let table = UnrecognizedTable::from_scores(&digit_scores, &fashion_scores, &thresholds)?;
    let records = (0..mixed.len())
        .map(|i| {
            let accepted = gate[i];
            GuardedRecord {
                index: i,
                score: if i < n_in { digit_scores[i] } else { fashion_scores[i - n_in] },
                provenance: mixed.provenance()[i],
                true_label: Some(labels[i]),
                accepted,
                prediction: accepted.then_some(preds[i]),
            }
        })
        .collect();
    let rate = |s: &[f64]| s.iter().filter(|&&v| model.accepts(v)).count() as f64 / s.len() as f64;
    let evaluation = SeedEvaluation {
        seed,
        tau,
        digit_summary: summary(digits.summary)?,
        fashion_summary: summary(fashion.summary)?,
        digit_acceptance: rate(&digit_scores),
        fashion_acceptance: rate(&fashion_scores),
        validation_scores,
        digit_scores,
        fashion_scores,
        watchdog,
        unguarded_in,
        unguarded_mixed,
        guarded_mixed,
        table,
        records,
    };
    Ok((model, evaluation))
}

/// Vertically averaged curves across seeds.
#[derive(Debug, Clone)]
pub struct AveragedCurves {
    pub watchdog: RocCurve,
    pub unguarded_in: RocCurve,
    pub unguarded_mixed: RocCurve,
    pub guarded_mixed: RocCurve,
}

pub fn average_seeds(evaluations: &[SeedEvaluation], grid: usize) -> Result<AveragedCurves> {
    let avg = |f: fn(&SeedEvaluation) -> &RocCurve| {
        average_rocs(&evaluations.iter().map(|e| f(e).clone()).collect::<Vec<_>>(), grid)
    };
    Ok(AveragedCurves {
        watchdog: avg(|e| &e.watchdog)?,
        unguarded_in: avg(|e| &e.unguarded_in)?,
        unguarded_mixed: avg(|e| &e.unguarded_mixed)?,
        guarded_mixed: avg(|e| &e.guarded_mixed)?,
    })
}
