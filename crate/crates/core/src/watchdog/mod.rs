//! Reconstruction-distance scoring, threshold calibration and classifier gating.

mod gate;
mod score;

pub use gate::{
    calibrate_threshold, predictions, records_to_csv, Classifier, GateDecision, GuardedOutcome, GuardedRecord,
    Prediction, ThresholdPolicy,
};
pub use score::{ScoreDefinition, ScoreRecord, ScoreSummary, ScoredDataset, WatchdogModel, SCORE_CHUNK};
