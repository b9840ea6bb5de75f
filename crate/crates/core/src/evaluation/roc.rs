use std::fmt::Write as _;

use crate::data::{Dataset, EvalSuite, Provenance};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::watchdog::{predictions, Classifier, Prediction, WatchdogModel};

/// Which end of the score scale marks a sample as predicted positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    /// Accept when `score ≤ τ` (reconstruction distances).
    LowerIsPositive,
    /// Accept when `score ≥ τ` (classifier confidences).
    HigherIsPositive,
}

impl Orientation {
    pub fn accepts(self, score: f64, threshold: f64) -> bool {
        match self {
            Orientation::LowerIsPositive => score <= threshold,
            Orientation::HigherIsPositive => score >= threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.fp + self.tn
    }

    /// `TP / (TP + FN)`.
    pub fn tpr(&self) -> f64 {
        self.tp as f64 / self.positives() as f64
    }

    /// `FP / (FP + TN)`.
    pub fn fpr(&self) -> f64 {
        self.fp as f64 / self.negatives() as f64
    }
}

/// One operating point. Averaged curves carry no counts and a NaN threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub counts: Option<ConfusionCounts>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// From (0, 0) to (1, 1); FPR and TPR nondecreasing.
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positive_definition: String,
    /// Every sample shared one score, so the curve has a single operating point.
    pub degenerate: bool,
}

impl RocCurve {
    /// `threshold,fpr,tpr,tp,fp,fn,tn`; count columns blank for averaged curves.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr,tp,fp,fn,tn\n");
        for p in &self.points {
            let _ = write!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
            match p.counts {
                Some(c) => {
                    let _ = writeln!(out, ",{},{},{},{}", c.tp, c.fp, c.fn_, c.tn);
                }
                None => out.push_str(",,,,\n"),
            }
        }
        out
    }

    /// Largest AUC reachable by any ranking of the accepted samples, given those a gate
    /// rejected (score −∞, reached only at the closing point); 1 when nothing was rejected.
    ///
    /// A rejected positive scores 0 against every accepted negative and ½ against every
    /// rejected one, so with rejected-positive fraction `r` and accepted-negative fraction
    /// `a` the ceiling is `1 − r(1 + a)/2`.
    pub fn rejection_ceiling(&self) -> f64 {
        match self.points.as_slice() {
            [.., before, last] if last.threshold == f64::NEG_INFINITY => {
                1.0 - (1.0 - before.tpr) * (1.0 + before.fpr) / 2.0
            }
            _ => 1.0,
        }
    }
}

/// Trapezoidal area under a polyline of (FPR, TPR) points.
pub(crate) fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum()
}

/// Empirical ROC curve sweeping τ over every distinct observed score.
///
/// The curve opens with an accept-nothing sentinel at τ = ∓∞ (0, 0); the last
/// distinct score accepts everything and closes it at (1, 1). Tied scores form
/// one point. The AUC is the trapezoidal area, computed from integer counts.
pub fn roc_from_scores(pos: &[f64], neg: &[f64], orientation: Orientation) -> Result<RocCurve> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Empty("ROC needs positive and negative scores"));
    }
    if pos.iter().chain(neg).any(|s| s.is_nan()) {
        return Err(Error::NonFinite("NaN score in ROC input".into()));
    }
    // (score, is_positive), ordered so that acceptance grows along the sweep
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    match orientation {
        Orientation::LowerIsPositive => all.sort_by(|a, b| a.0.total_cmp(&b.0)),
        Orientation::HigherIsPositive => all.sort_by(|a, b| b.0.total_cmp(&a.0)),
    }
    let (p, n) = (pos.len() as u64, neg.len() as u64);
    let sentinel = match orientation {
        Orientation::LowerIsPositive => f64::NEG_INFINITY,
        Orientation::HigherIsPositive => f64::INFINITY,
    };
    let mut counts = ConfusionCounts { tp: 0, fp: 0, fn_: p, tn: n };
    let mut points = vec![point(sentinel, counts)];
    // twice the area in units of one positive × one negative
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < all.len() {
        let score = all[i].0;
        let (tp0, fp0) = (counts.tp, counts.fp);
        while i < all.len() && all[i].0 == score {
            if all[i].1 {
                counts.tp += 1;
                counts.fn_ -= 1;
            } else {
                counts.fp += 1;
                counts.tn -= 1;
            }
            i += 1;
        }
        area2 += u128::from(counts.fp - fp0) * u128::from(counts.tp + tp0);
        points.push(point(score, counts));
    }
    let auc = area2 as f64 / (2 * u128::from(p) * u128::from(n)) as f64;
    let degenerate = points.len() == 2;
    Ok(RocCurve { points, auc, positive_definition: String::new(), degenerate })
}

fn point(threshold: f64, counts: ConfusionCounts) -> RocPoint {
    RocPoint { threshold, fpr: counts.fpr(), tpr: counts.tpr(), counts: Some(counts) }
}

/// Mann–Whitney statistic: P(positive ranks better than negative), ties counted half.
pub fn pair_auc(pos: &[f64], neg: &[f64], orientation: Orientation) -> f64 {
    let mut twice = 0u64;
    for &a in pos {
        for &b in neg {
            let better = match orientation {
                Orientation::LowerIsPositive => a < b,
                Orientation::HigherIsPositive => a > b,
            };
            twice += if better {
                2
            } else if a == b {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pos.len() * neg.len()) as f64
}

/// Watchdog ROC on the mixed suite: digits are positives, fashion images negatives.
pub fn watchdog_roc<T: Scalar>(suite: &EvalSuite<T>, model: &WatchdogModel<T>) -> Result<RocCurve> {
    let pos = model.score_dataset(&suite.in_dist)?.scores();
    let neg = model.score_dataset(&suite.out_dist)?.scores();
    let mut curve = roc_from_scores(&pos, &neg, Orientation::LowerIsPositive)?;
    curve.positive_definition = "in_distribution (accepted: score <= threshold)".into();
    Ok(curve)
}

/// Confidence-threshold ROC of a classifier, optionally behind a watchdog gate.
///
/// A sample's score is its max softmax probability; gate-rejected samples
/// score −∞ and so are never accepted at any confidence threshold. Positive
/// means in-distribution and correctly classified; everything else is negative.
pub fn classification_roc<T: Scalar>(
    data: &Dataset<T>,
    classifier: &impl Classifier<T>,
    watchdog: Option<&WatchdogModel<T>>,
) -> Result<RocCurve> {
    let labels = data.labels().ok_or(Error::Empty("classification ROC needs labels"))?;
    let preds = predictions(&classifier.probabilities(data.images())?);
    let gate = match watchdog {
        Some(w) => Some(w.score_dataset(data)?.records.iter().map(|r| w.accepts(r.score)).collect::<Vec<_>>()),
        None => None,
    };
    classification_roc_from_predictions(data.provenance(), labels, &preds, gate.as_deref())
}

/// [`classification_roc`] over precomputed predictions and (optional) gate decisions.
pub fn classification_roc_from_predictions(
    provenance: &[Provenance],
    labels: &[u8],
    preds: &[Prediction],
    gate: Option<&[bool]>,
) -> Result<RocCurve> {
    let n = provenance.len();
    if labels.len() != n || preds.len() != n || gate.is_some_and(|g| g.len() != n) {
        return Err(Error::Shape("provenance, labels, predictions and gate must align".into()));
    }
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for i in 0..n {
        let accepted = gate.map_or(true, |g| g[i]);
        let score = if accepted { preds[i].confidence } else { f64::NEG_INFINITY };
        let positive = provenance[i] == Provenance::InDistribution && preds[i].label == labels[i] as usize;
        if positive {
            pos.push(score);
        } else {
            neg.push(score);
        }
    }
    let mut curve = roc_from_scores(&pos, &neg, Orientation::HigherIsPositive)?;
    curve.positive_definition = format!(
        "in_distribution and correctly classified ({}; accepted: confidence >= threshold)",
        if gate.is_some() { "guarded" } else { "unguarded" }
    );
    Ok(curve)
}
