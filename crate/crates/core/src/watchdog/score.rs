use std::fmt;
use std::str::FromStr;

use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Samples per autoencoder inference call when scoring datasets.
pub const SCORE_CHUNK: usize = 1000;

/// Distance between an image and its reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreDefinition {
    /// `sqrt(sum((x - x̂)²))`; ranges over `[0, sqrt(pixels)]`, i.e. `[0, 28]` for 28×28 images.
    #[default]
    RootSumSquared,
    /// `sqrt(mean((x - x̂)²))`; ranges over `[0, 1]`.
    RootMeanSquared,
}

impl ScoreDefinition {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreDefinition::RootSumSquared => "root_sum_squared",
            ScoreDefinition::RootMeanSquared => "root_mean_squared",
        }
    }

    /// Largest attainable score for images of `pixels` values in `[0, 1]`.
    pub fn max_score(self, pixels: usize) -> f64 {
        match self {
            ScoreDefinition::RootSumSquared => (pixels as f64).sqrt(),
            ScoreDefinition::RootMeanSquared => 1.0,
        }
    }

    /// Score from an image and its reconstruction; accumulates in `f64`.
    pub fn distance<T: Scalar>(self, image: &[T], reconstruction: &[T]) -> f64 {
        debug_assert_eq!(image.len(), reconstruction.len());
        let sum: f64 = image
            .iter()
            .zip(reconstruction)
            .map(|(&x, &y)| {
                let d = x.to_f64_lossy() - y.to_f64_lossy();
                d * d
            })
            .sum();
        match self {
            ScoreDefinition::RootSumSquared => sum.sqrt(),
            ScoreDefinition::RootMeanSquared => (sum / image.len().max(1) as f64).sqrt(),
        }
    }
}

impl fmt::Display for ScoreDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreDefinition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "root_sum_squared" => Ok(ScoreDefinition::RootSumSquared),
            "root_mean_squared" => Ok(ScoreDefinition::RootMeanSquared),
            other => Err(Error::Config(format!("unknown score definition {other:?}"))),
        }
    }
}

/// An autoencoder, a score definition and an acceptance threshold τ.
///
/// Immutable once built; scoring and gating only read it, so it can be
/// shared across threads.
#[derive(Debug, Clone)]
pub struct WatchdogModel<T> {
    autoencoder: Network<T>,
    score_def: ScoreDefinition,
    threshold: f64,
}

impl<T: Scalar> WatchdogModel<T> {
    /// Wraps an autoencoder whose output shape equals its input shape.
    pub fn new(autoencoder: Network<T>, score_def: ScoreDefinition, threshold: f64) -> Result<Self> {
        if autoencoder.input_shape() != autoencoder.output_shape() {
            return Err(Error::Config(format!(
                "autoencoder maps {:?} to {:?}; a watchdog needs matching shapes",
                autoencoder.input_shape(),
                autoencoder.output_shape()
            )));
        }
        let model = Self { autoencoder, score_def, threshold: 0.0 };
        model.with_threshold(threshold)
    }

    /// Same autoencoder and score definition with a different τ.
    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        let max = self.max_score();
        if !(0.0..=max).contains(&threshold) {
            return Err(Error::Domain(format!("threshold {threshold} outside the score range [0, {max}]")));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn autoencoder(&self) -> &Network<T> {
        &self.autoencoder
    }

    pub fn score_definition(&self) -> ScoreDefinition {
        self.score_def
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn pixels(&self) -> usize {
        self.autoencoder.input_shape().iter().product()
    }

    pub fn max_score(&self) -> f64 {
        self.score_def.max_score(self.pixels())
    }

    /// `accepted ⇔ score ≤ τ`.
    pub fn accepts(&self, score: f64) -> bool {
        score <= self.threshold
    }

    /// Score of a single image shaped like the autoencoder input.
    pub fn score(&self, image: &Tensor<T>) -> Result<f64> {
        if image.shape() != self.autoencoder.input_shape() {
            return Err(Error::Shape(format!(
                "image shape {:?} does not match autoencoder input {:?}",
                image.shape(),
                self.autoencoder.input_shape()
            )));
        }
        Ok(self.score_batch(image)?[0])
    }

    /// Scores of every image in a `[n, ...]` batch, in order.
    pub fn score_batch(&self, images: &Tensor<T>) -> Result<Vec<f64>> {
        check_unit_range(images)?;
        let recon = self.autoencoder.infer_chunked(images, SCORE_CHUNK)?;
        let pixels = self.pixels();
        Ok(images
            .data()
            .chunks_exact(pixels)
            .zip(recon.data().chunks_exact(pixels))
            .map(|(x, y)| self.score_def.distance(x, y))
            .collect())
    }

    /// One record per sample, in order, with a summary (absent for an empty dataset).
    pub fn score_dataset(&self, data: &Dataset<T>) -> Result<ScoredDataset> {
        let scores = if data.is_empty() { Vec::new() } else { self.score_batch(data.images())? };
        let records = scores
            .into_iter()
            .enumerate()
            .map(|(index, score)| ScoreRecord {
                index,
                score,
                provenance: data.provenance()[index],
                label: data.labels().map(|l| l[index]),
            })
            .collect::<Vec<_>>();
        let summary = ScoreSummary::from_scores(&records.iter().map(|r| r.score).collect::<Vec<_>>());
        Ok(ScoredDataset { records, summary })
    }
}

fn check_unit_range<T: Scalar>(images: &Tensor<T>) -> Result<()> {
    match images.data().iter().position(|&v| !(v >= T::zero() && v <= T::one())) {
        None => Ok(()),
        Some(i) => Err(Error::Domain(format!("pixel {i} has value {} outside [0, 1]", images.data()[i]))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreRecord {
    pub index: usize,
    pub score: f64,
    pub provenance: Provenance,
    pub label: Option<u8>,
}

/// Location statistics of a score list; percentiles use the lower empirical quantile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub p05: f64,
    pub median: f64,
    pub p95: f64,
}

impl ScoreSummary {
    /// `None` for an empty list.
    pub fn from_scores(scores: &[f64]) -> Option<Self> {
        if scores.is_empty() {
            return None;
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        Some(Self {
            count: sorted.len(),
            mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            p05: lower_quantile(&sorted, 0.05),
            median: lower_quantile(&sorted, 0.5),
            p95: lower_quantile(&sorted, 0.95),
        })
    }
}

/// Smallest element `v` of `sorted` with `fraction(sorted ≤ v) ≥ q`.
pub(crate) fn lower_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    // the smallest count k with k / n ≥ q, found exactly rather than by rounding q * n
    let mut k = ((q * n as f64).ceil() as usize).clamp(1, n);
    while k > 1 && (k - 1) as f64 / n as f64 >= q {
        k -= 1;
    }
    while k < n && (k as f64 / n as f64) < q {
        k += 1;
    }
    // ties: the fraction ≤ sorted[k-1] can only be larger than k / n
    sorted[k - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDataset {
    pub records: Vec<ScoreRecord>,
    pub summary: Option<ScoreSummary>,
}

impl ScoredDataset {
    pub fn scores(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.score).collect()
    }
}
