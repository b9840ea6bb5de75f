use super::roc::{trapezoid_auc, RocCurve, RocPoint};
use crate::error::{Error, Result};

/// Default number of FPR grid points for averaged curves.
pub const DEFAULT_GRID: usize = 1001;

/// TPR of `curve` at false-positive rate `fpr`.
///
/// Linear between operating points; at a vertical jump (several points sharing
/// one FPR) the highest TPR is taken.
pub fn tpr_at(curve: &RocCurve, fpr: f64) -> f64 {
    let pts = &curve.points;
    let j = pts.partition_point(|p| p.fpr <= fpr);
    if j == 0 {
        return pts[0].tpr;
    }
    let a = &pts[j - 1];
    if a.fpr == fpr || j == pts.len() {
        return a.tpr;
    }
    let b = &pts[j];
    a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr)
}

/// Vertical averaging on a uniform FPR grid of `grid_size` points.
///
/// The averaged curve starts at (0, 0), then holds the mean TPR at each grid
/// point; its AUC is the trapezoidal area of those points.
pub fn average_rocs(curves: &[RocCurve], grid_size: usize) -> Result<RocCurve> {
    if curves.is_empty() {
        return Err(Error::Empty("no ROC curves to average"));
    }
    if grid_size < 2 {
        return Err(Error::Config(format!("averaging grid needs at least 2 points, got {grid_size}")));
    }
    let mut points = vec![RocPoint { threshold: f64::NAN, fpr: 0.0, tpr: 0.0, counts: None }];
    for j in 0..grid_size {
        let fpr = j as f64 / (grid_size - 1) as f64;
        let tpr = curves.iter().map(|c| tpr_at(c, fpr)).sum::<f64>() / curves.len() as f64;
        points.push(RocPoint { threshold: f64::NAN, fpr, tpr, counts: None });
    }
    let auc = trapezoid_auc(&points);
    let positive_definition = curves[0].positive_definition.clone();
    Ok(RocCurve { points, auc, positive_definition, degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{roc_from_scores, Orientation};

    #[test]
    fn midpoint_of_best_and_worst() {
        let best = roc_from_scores(&[0.0], &[1.0], Orientation::LowerIsPositive).unwrap();
        let worst = roc_from_scores(&[1.0], &[0.0], Orientation::LowerIsPositive).unwrap();
        let avg = average_rocs(&[best, worst], 11).unwrap();
        for p in &avg.points[1..avg.points.len() - 1] {
            assert_eq!(p.tpr, 0.5);
        }
        assert_eq!(avg.points.last().unwrap().tpr, 1.0);
    }

    #[test]
    fn vertical_jumps_take_the_upper_value() {
        let c = roc_from_scores(&[1.0, 3.0], &[2.0, 4.0], Orientation::LowerIsPositive).unwrap();
        assert_eq!(tpr_at(&c, 0.0), 0.5);
        assert_eq!(tpr_at(&c, 0.25), 0.5);
        assert_eq!(tpr_at(&c, 0.5), 1.0);
        assert_eq!(tpr_at(&c, 1.0), 1.0);
    }

    #[test]
    fn errors() {
        assert!(average_rocs(&[], 10).is_err());
        let c = roc_from_scores(&[0.0], &[1.0], Orientation::LowerIsPositive).unwrap();
        assert!(average_rocs(&[c], 1).is_err());
    }
}
