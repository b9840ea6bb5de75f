use std::fmt::Write as _;

use crate::data::EvalSuite;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::watchdog::WatchdogModel;

/// Images rejected (score > τ) per dataset at one threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnrecognizedRow {
    pub threshold: f64,
    pub in_dist_rejected: usize,
    pub out_dist_rejected: usize,
    pub in_dist_ratio: f64,
    pub out_dist_ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnrecognizedTable {
    pub in_dist_total: usize,
    pub out_dist_total: usize,
    pub rows: Vec<UnrecognizedRow>,
}

impl UnrecognizedTable {
    /// Counts from precomputed scores; `thresholds` must be ascending.
    pub fn from_scores(in_scores: &[f64], out_scores: &[f64], thresholds: &[f64]) -> Result<Self> {
        if thresholds.windows(2).any(|w| !(w[0] <= w[1])) || thresholds.iter().any(|t| t.is_nan()) {
            return Err(Error::Config("unrecognized-table thresholds must be sorted ascending".into()));
        }
        let ratio = |count: usize, total: usize| if total == 0 { 0.0 } else { count as f64 / total as f64 };
        let rows = thresholds
            .iter()
            .map(|&t| {
                let in_rej = in_scores.iter().filter(|&&s| s > t).count();
                let out_rej = out_scores.iter().filter(|&&s| s > t).count();
                UnrecognizedRow {
                    threshold: t,
                    in_dist_rejected: in_rej,
                    out_dist_rejected: out_rej,
                    in_dist_ratio: ratio(in_rej, in_scores.len()),
                    out_dist_ratio: ratio(out_rej, out_scores.len()),
                }
            })
            .collect();
        Ok(Self { in_dist_total: in_scores.len(), out_dist_total: out_scores.len(), rows })
    }

    /// `threshold,in_dist_rejected,out_dist_rejected,in_dist_ratio,out_dist_ratio`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,in_dist_rejected,out_dist_rejected,in_dist_ratio,out_dist_ratio\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.threshold, r.in_dist_rejected, r.out_dist_rejected, r.in_dist_ratio, r.out_dist_ratio
            );
        }
        out
    }
}

/// `count` evenly spaced thresholds over `[0, max]`.
pub fn threshold_grid(max: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|i| max * i as f64 / (count - 1) as f64).collect(),
    }
}

pub fn unrecognized_table<T: Scalar>(
    suite: &EvalSuite<T>,
    model: &WatchdogModel<T>,
    thresholds: &[f64],
) -> Result<UnrecognizedTable> {
    let in_scores = model.score_dataset(&suite.in_dist)?.scores();
    let out_scores = model.score_dataset(&suite.out_dist)?.scores();
    UnrecognizedTable::from_scores(&in_scores, &out_scores, thresholds)
}
