//! ROC construction against brute-force oracles, and averaging properties.

use proptest::prelude::*;
use watchdog_core::data::{Dataset, Provenance, Role};
use watchdog_core::evaluation::{
    average_rocs, classification_roc, pair_auc, roc_from_scores, tpr_at, ConfusionCounts, Orientation, RocCurve,
};
use watchdog_core::nn::{LayerSpec, Network};
use watchdog_core::watchdog::{ScoreDefinition, WatchdogModel};
use watchdog_core::Tensor;

/// Enumerates the confusion counts at each distinct score directly.
fn brute_force(pos: &[f64], neg: &[f64], orientation: Orientation) -> Vec<(f64, ConfusionCounts)> {
    let mut distinct: Vec<f64> = pos.iter().chain(neg).copied().collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let sentinel = match orientation {
        Orientation::LowerIsPositive => f64::NEG_INFINITY,
        Orientation::HigherIsPositive => {
            distinct.reverse();
            f64::INFINITY
        }
    };
    let counts = |t: Option<f64>| {
        let acc = |s: f64| t.is_some_and(|t| orientation.accepts(s, t));
        let tp = pos.iter().filter(|&&s| acc(s)).count() as u64;
        let fp = neg.iter().filter(|&&s| acc(s)).count() as u64;
        ConfusionCounts { tp, fp, fn_: pos.len() as u64 - tp, tn: neg.len() as u64 - fp }
    };
    std::iter::once((sentinel, counts(None))).chain(distinct.into_iter().map(|t| (t, counts(Some(t))))).collect()
}

/// Small integer-valued scores so that ties are frequent.
fn scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..20).prop_map(|v| f64::from(v) / 4.0), 1..=50)
}

/// Confidences with a share of gate rejections (−∞).
fn gated_scores() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![3 => (0u8..20).prop_map(|v| f64::from(v) / 20.0), 1 => Just(f64::NEG_INFINITY)], 1..=50)
}

fn orientation() -> impl Strategy<Value = Orientation> {
    prop_oneof![Just(Orientation::LowerIsPositive), Just(Orientation::HigherIsPositive)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn gated_auc_never_exceeds_the_rejection_ceiling(pos in gated_scores(), neg in gated_scores()) {
        let c = roc_from_scores(&pos, &neg, Orientation::HigherIsPositive).unwrap();
        prop_assert!(c.auc <= c.rejection_ceiling() + 1e-12, "auc {} ceiling {}", c.auc, c.rejection_ceiling());
        // perfectly ranked accepted samples reach the ceiling exactly
        let split = |v: &[f64], accepted: f64| v.iter().map(|&s| if s.is_finite() { accepted } else { s }).collect::<Vec<_>>();
        let best = roc_from_scores(&split(&pos, 1.0), &split(&neg, 0.0), Orientation::HigherIsPositive).unwrap();
        prop_assert!((best.auc - best.rejection_ceiling()).abs() <= 1e-12);
        prop_assert_eq!(best.rejection_ceiling(), c.rejection_ceiling());
    }

    #[test]
    fn curve_equals_confusion_enumeration(pos in scores(), neg in scores(), o in orientation()) {
        let curve = roc_from_scores(&pos, &neg, o).unwrap();
        let oracle = brute_force(&pos, &neg, o);
        prop_assert_eq!(curve.points.len(), oracle.len());
        for (p, (t, c)) in curve.points.iter().zip(&oracle) {
            prop_assert_eq!(p.threshold, *t);
            prop_assert_eq!(p.counts, Some(*c));
            prop_assert_eq!(p.tpr, c.tp as f64 / pos.len() as f64);
            prop_assert_eq!(p.fpr, c.fp as f64 / neg.len() as f64);
        }
    }

    #[test]
    fn auc_equals_pair_statistic(pos in scores(), neg in scores(), o in orientation()) {
        let curve = roc_from_scores(&pos, &neg, o).unwrap();
        prop_assert!((curve.auc - pair_auc(&pos, &neg, o)).abs() < 1e-9);
    }

    #[test]
    fn curve_is_monotone_and_spans_the_unit_square(pos in scores(), neg in scores(), o in orientation()) {
        let c = roc_from_scores(&pos, &neg, o).unwrap();
        let (first, last) = (c.points[0], *c.points.last().unwrap());
        prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        for w in c.points.windows(2) {
            prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
        }
        for p in &c.points {
            let k = p.counts.unwrap();
            prop_assert_eq!(k.positives(), pos.len() as u64);
            prop_assert_eq!(k.negatives(), neg.len() as u64);
        }
    }

    #[test]
    fn averaging_a_curve_with_itself_is_idempotent_at_grid_points(pos in scores(), neg in scores()) {
        let c = roc_from_scores(&pos, &neg, Orientation::LowerIsPositive).unwrap();
        let avg = average_rocs(&[c.clone(), c.clone()], 101).unwrap();
        for p in &avg.points[1..] {
            prop_assert!((p.tpr - tpr_at(&c, p.fpr)).abs() < 1e-6);
        }
    }

    #[test]
    fn averaged_auc_lies_within_individual_aucs(
        runs in prop::collection::vec((scores(), scores()), 1..=5),
    ) {
        let curves: Vec<RocCurve> =
            runs.iter().map(|(p, n)| roc_from_scores(p, n, Orientation::LowerIsPositive).unwrap()).collect();
        let grid = 1001;
        let avg = average_rocs(&curves, grid).unwrap();
        let lo = curves.iter().map(|c| c.auc).fold(f64::INFINITY, f64::min);
        let hi = curves.iter().map(|c| c.auc).fold(f64::NEG_INFINITY, f64::max);
        // trapezoids on a uniform grid differ from the exact area by at most one grid step
        let slack = 1.0 / (grid - 1) as f64;
        prop_assert!(avg.auc >= lo - slack && avg.auc <= hi + slack, "{} not in [{lo}, {hi}]", avg.auc);
    }
}

#[test]
fn single_curve_average_matches_at_grid_points() {
    let c = roc_from_scores(&[1.0, 3.0, 3.0, 5.0], &[2.0, 3.0, 6.0], Orientation::LowerIsPositive).unwrap();
    let avg = average_rocs(std::slice::from_ref(&c), 21).unwrap();
    for p in &avg.points[1..] {
        assert!((p.tpr - tpr_at(&c, p.fpr)).abs() < 1e-12);
    }
}

/// Toy setup: 2×2 images; class k lights pixel k. Fashion-like negatives are flat gray.
fn toy_mixed() -> Dataset<f32> {
    let n_in = 40;
    let images_in = Tensor::from_fn(vec![n_in, 2, 2, 1], |j| if j % 4 == (j / 4) % 4 { 0.9 } else { 0.1 });
    let labels_in: Vec<u8> = (0..n_in).map(|i| (i % 4) as u8).collect();
    let din = Dataset::new(images_in, Some(labels_in), Provenance::InDistribution, Role::Evaluation).unwrap();
    let images_out = Tensor::from_fn(vec![20, 2, 2, 1], |j| 0.3 + 0.02 * (j / 4) as f32);
    let dout = Dataset::new(images_out, Some(vec![1; 20]), Provenance::OutOfDistribution, Role::Evaluation).unwrap();
    Dataset::concat(&[&din, &dout], Role::Evaluation).unwrap()
}

fn toy_classifier() -> Network<f32> {
    Network::new(vec![2, 2, 1], vec![LayerSpec::Flatten, LayerSpec::Dense { units: 4 }, LayerSpec::Softmax], 3).unwrap()
}

fn identity_watchdog(tau: f64) -> WatchdogModel<f32> {
    let ae =
        Network::new(vec![2, 2, 1], vec![LayerSpec::Flatten, LayerSpec::Reshape { shape: vec![2, 2, 1] }], 0).unwrap();
    WatchdogModel::new(ae, ScoreDefinition::RootSumSquared, tau).unwrap()
}

#[test]
fn transparent_gate_reproduces_unguarded_curve() {
    let data = toy_mixed();
    let clf = toy_classifier();
    let unguarded = classification_roc(&data, &clf, None).unwrap();
    let wd = identity_watchdog(0.0);
    let max = wd.max_score();
    let guarded = classification_roc(&data, &clf, Some(&wd.with_threshold(max).unwrap())).unwrap();
    assert_eq!(unguarded.points, guarded.points);
    assert_eq!(unguarded.auc, guarded.auc);
}

#[test]
fn classification_roc_requires_labels() {
    let data = Dataset::new(Tensor::<f32>::zeros(vec![3, 2, 2, 1]), None, Provenance::InDistribution, Role::Evaluation)
        .unwrap();
    assert!(classification_roc(&data, &toy_classifier(), None).is_err());
}
