//! ROC/AUC, guarded-versus-unguarded comparisons, averaged curves and rejection tables.

mod average;
mod plot;
mod roc;
mod table;

pub use average::{average_rocs, tpr_at, DEFAULT_GRID};
pub use plot::{roc_svg, unrecognized_svg};
pub use roc::{
    classification_roc, classification_roc_from_predictions, pair_auc, roc_from_scores, watchdog_roc, ConfusionCounts,
    Orientation, RocCurve, RocPoint,
};
pub use table::{threshold_grid, unrecognized_table, UnrecognizedRow, UnrecognizedTable};
