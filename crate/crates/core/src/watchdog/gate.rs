use std::fmt::Write as _;

use super::score::{lower_quantile, WatchdogModel};
use crate::data::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// How τ is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    /// Smallest in-distribution score accepting at least this fraction of the calibration scores.
    TargetTpr(f64),
    /// A given τ.
    Fixed(f64),
}

/// τ from in-distribution calibration scores (the validation split, never the evaluation sets).
pub fn calibrate_threshold(in_dist_scores: &[f64], policy: ThresholdPolicy) -> Result<f64> {
    match policy {
        ThresholdPolicy::Fixed(tau) if tau.is_finite() && tau >= 0.0 => Ok(tau),
        ThresholdPolicy::Fixed(tau) => Err(Error::Domain(format!("fixed threshold must be finite and ≥ 0, got {tau}"))),
        ThresholdPolicy::TargetTpr(target) => {
            if !(target > 0.0 && target <= 1.0) {
                return Err(Error::Domain(format!("target TPR must be in (0, 1], got {target}")));
            }
            if in_dist_scores.is_empty() {
                return Err(Error::Empty("calibration scores"));
            }
            if let Some(bad) = in_dist_scores.iter().find(|s| !s.is_finite()) {
                return Err(Error::NonFinite(format!("calibration score {bad}")));
            }
            let mut sorted = in_dist_scores.to_vec();
            sorted.sort_by(f64::total_cmp);
            Ok(lower_quantile(&sorted, target))
        }
    }
}

/// Outcome of screening one input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateDecision {
    pub score: f64,
    pub accepted: bool,
    pub provenance: Option<Provenance>,
}

/// Anything that maps a batch of images to per-class probabilities.
pub trait Classifier<T> {
    /// `[n, classes]` probabilities for `[n, ...]` images.
    fn probabilities(&self, images: &Tensor<T>) -> Result<Tensor<T>>;
}

/// Samples per classifier inference call.
const CLASSIFY_CHUNK: usize = 1000;

impl<T: Scalar> Classifier<T> for Network<T> {
    fn probabilities(&self, images: &Tensor<T>) -> Result<Tensor<T>> {
        self.infer_chunked(images, CLASSIFY_CHUNK)
    }
}

/// Top-1 class and its probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GuardedOutcome {
    Classified(Prediction),
    Rejected { score: f64 },
}

/// Argmax class and max probability per row.
pub fn predictions<T: Scalar>(probabilities: &Tensor<T>) -> Vec<Prediction> {
    let classes = probabilities.sample_len();
    probabilities
        .argmax_rows()
        .into_iter()
        .enumerate()
        .map(|(i, label)| Prediction { label, confidence: probabilities.data()[i * classes + label].to_f64_lossy() })
        .collect()
}

/// One screened and (if accepted) classified sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuardedRecord {
    pub index: usize,
    pub score: f64,
    pub provenance: Provenance,
    pub true_label: Option<u8>,
    pub accepted: bool,
    pub prediction: Option<Prediction>,
}

impl<T: Scalar> WatchdogModel<T> {
    pub fn guard(&self, image: &Tensor<T>) -> Result<GateDecision> {
        let score = self.score(image)?;
        Ok(GateDecision { score, accepted: self.accepts(score), provenance: None })
    }

    /// One decision per sample, carrying its provenance.
    pub fn guard_dataset(&self, data: &Dataset<T>) -> Result<Vec<GateDecision>> {
        Ok(self
            .score_dataset(data)?
            .records
            .into_iter()
            .map(|r| GateDecision { score: r.score, accepted: self.accepts(r.score), provenance: Some(r.provenance) })
            .collect())
    }

    /// Classifies a single image if the gate accepts it; a rejected image never reaches the classifier.
    pub fn guarded_classify(&self, classifier: &impl Classifier<T>, image: &Tensor<T>) -> Result<GuardedOutcome> {
        let decision = self.guard(image)?;
        if !decision.accepted {
            return Ok(GuardedOutcome::Rejected { score: decision.score });
        }
        let mut batch_shape = vec![1];
        batch_shape.extend_from_slice(image.shape());
        let batched = image.clone().reshape(batch_shape)?;
        Ok(GuardedOutcome::Classified(predictions(&classifier.probabilities(&batched)?)[0]))
    }

    /// Screens every sample and classifies only the accepted ones, in one classifier call.
    pub fn guarded_classify_dataset(
        &self,
        classifier: &impl Classifier<T>,
        data: &Dataset<T>,
    ) -> Result<Vec<GuardedRecord>> {
        let scored = self.score_dataset(data)?;
        let accepted: Vec<usize> = scored.records.iter().filter(|r| self.accepts(r.score)).map(|r| r.index).collect();
        let mut predicted = if accepted.is_empty() {
            Vec::new()
        } else {
            predictions(&classifier.probabilities(&data.images().select(&accepted))?)
        }
        .into_iter();
        Ok(scored
            .records
            .iter()
            .map(|r| {
                let accepted = self.accepts(r.score);
                GuardedRecord {
                    index: r.index,
                    score: r.score,
                    provenance: r.provenance,
                    true_label: r.label,
                    accepted,
                    prediction: if accepted { predicted.next() } else { None },
                }
            })
            .collect())
    }
}

/// `index,score,provenance,true_label,accepted,predicted_label,confidence`; blanks where absent.
pub fn records_to_csv(records: &[GuardedRecord]) -> String {
    let mut out = String::from("index,score,provenance,true_label,accepted,predicted_label,confidence\n");
    for r in records {
        let label = r.true_label.map(|l| l.to_string()).unwrap_or_default();
        let (pred, conf) = match r.prediction {
            Some(p) => (p.label.to_string(), p.confidence.to_string()),
            None => (String::new(), String::new()),
        };
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.index, r.score, r.provenance, label, r.accepted, pred, conf);
    }
    out
}

#[cfg(test)]
mod tests {
    use std::cell::Cell;

    use super::*;
    use crate::data::Role;
    use crate::nn::LayerSpec;
    use crate::watchdog::ScoreDefinition;

    /// Reconstructs every image as a constant 0.5 image.
    fn half_autoencoder() -> Network<f32> {
        let mut net = Network::new(
            vec![2, 2, 1],
            vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 4 },
                LayerSpec::Sigmoid,
                LayerSpec::Reshape { shape: vec![2, 2, 1] },
            ],
            0,
        )
        .unwrap();
        for (_, p) in net.parameters_mut() {
            p.data_mut().fill(0.0);
        }
        net
    }

    struct Counting<'a> {
        inner: &'a dyn Classifier<f32>,
        calls: Cell<usize>,
        seen: Cell<usize>,
    }

    impl Classifier<f32> for Counting<'_> {
        fn probabilities(&self, images: &Tensor<f32>) -> Result<Tensor<f32>> {
            self.calls.set(self.calls.get() + 1);
            self.seen.set(self.seen.get() + images.batch());
            self.inner.probabilities(images)
        }
    }

    fn classifier() -> Network<f32> {
        Network::new(vec![2, 2, 1], vec![LayerSpec::Flatten, LayerSpec::Dense { units: 3 }, LayerSpec::Softmax], 7)
            .unwrap()
    }

    #[test]
    fn calibration_examples() {
        let s = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(calibrate_threshold(&s, ThresholdPolicy::TargetTpr(0.5)).unwrap(), 2.0);
        assert_eq!(calibrate_threshold(&s, ThresholdPolicy::TargetTpr(1.0)).unwrap(), 4.0);
        assert_eq!(calibrate_threshold(&s, ThresholdPolicy::Fixed(2.5)).unwrap(), 2.5);
        assert!(matches!(calibrate_threshold(&[], ThresholdPolicy::TargetTpr(0.9)), Err(Error::Empty(_))));
        assert!(calibrate_threshold(&s, ThresholdPolicy::TargetTpr(0.0)).is_err());
        assert!(calibrate_threshold(&s, ThresholdPolicy::TargetTpr(1.1)).is_err());
        assert!(calibrate_threshold(&s, ThresholdPolicy::Fixed(-1.0)).is_err());
    }

    #[test]
    fn gate_endpoints() {
        let img = Tensor::from_fn(vec![2, 2, 1], |i| i as f32 / 4.0);
        let strict = WatchdogModel::new(half_autoencoder(), ScoreDefinition::RootSumSquared, 0.0).unwrap();
        let open = strict.clone().with_threshold(strict.max_score()).unwrap();
        let d = strict.guard(&img).unwrap();
        assert!(d.score > 0.0 && !d.accepted);
        assert!(open.guard(&img).unwrap().accepted);
    }

    #[test]
    fn rejected_input_never_reaches_classifier() {
        let inner = classifier();
        let counting = Counting { inner: &inner, calls: Cell::new(0), seen: Cell::new(0) };
        let wd = WatchdogModel::new(half_autoencoder(), ScoreDefinition::RootSumSquared, 0.0).unwrap();
        let img = Tensor::from_fn(vec![2, 2, 1], |i| i as f32 / 4.0);
        assert!(matches!(wd.guarded_classify(&counting, &img).unwrap(), GuardedOutcome::Rejected { .. }));
        assert_eq!(counting.calls.get(), 0);

        let open = wd.with_threshold(2.0).unwrap();
        assert!(matches!(open.guarded_classify(&counting, &img).unwrap(), GuardedOutcome::Classified(_)));
        assert_eq!(counting.calls.get(), 1);
    }

    #[test]
    fn dataset_gate_classifies_only_accepted_and_matches_unguarded_when_open() {
        // image i is filled with i/5; distance to the 0.5 reconstruction is 2·|i/5 − 0.5|
        let images = Tensor::from_fn(vec![6, 2, 2, 1], |j| (j / 4) as f32 / 5.0);
        let data =
            Dataset::new(images, Some(vec![0, 1, 2, 0, 1, 2]), Provenance::InDistribution, Role::Evaluation).unwrap();
        let inner = classifier();
        let counting = Counting { inner: &inner, calls: Cell::new(0), seen: Cell::new(0) };
        let wd = WatchdogModel::new(half_autoencoder(), ScoreDefinition::RootSumSquared, 0.45).unwrap();
        let records = wd.guarded_classify_dataset(&counting, &data).unwrap();
        let accepted: Vec<bool> = records.iter().map(|r| r.accepted).collect();
        assert_eq!(accepted, vec![false, false, true, true, false, false]);
        assert_eq!(counting.seen.get(), 2);
        assert!(records.iter().all(|r| r.accepted == r.prediction.is_some()));

        let open = wd.with_threshold(2.0).unwrap();
        let guarded = open.guarded_classify_dataset(&inner, &data).unwrap();
        let unguarded = predictions(&inner.probabilities(data.images()).unwrap());
        assert_eq!(guarded.iter().map(|r| r.prediction.unwrap()).collect::<Vec<_>>(), unguarded);
    }

    #[test]
    fn csv_leaves_rejected_predictions_blank() {
        let records = [
            GuardedRecord {
                index: 0,
                score: 1.5,
                provenance: Provenance::InDistribution,
                true_label: Some(3),
                accepted: true,
                prediction: Some(Prediction { label: 3, confidence: 0.25 }),
            },
            GuardedRecord {
                index: 1,
                score: 9.0,
                provenance: Provenance::OutOfDistribution,
                true_label: None,
                accepted: false,
                prediction: None,
            },
        ];
        assert_eq!(
            records_to_csv(&records),
            "index,score,provenance,true_label,accepted,predicted_label,confidence\n\
             0,1.5,in_distribution,3,true,3,0.25\n\
             1,9,out_of_distribution,,false,,\n"
        );
    }
}
