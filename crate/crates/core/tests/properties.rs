use ocan::detector::label_for;
use ocan::eval::{confusion_metrics, dbscan_cluster, roc_auc};
use ocan::gan::{feature_matching_loss, pull_away_term, quantile_threshold};
use ocan::rng::SeededRng;
use ocan::sequence::Label;
use ocan::tensor::Tensor;
use proptest::prelude::*;

fn brute_auc(scores: &[f64], labels: &[Label]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (sp, lp) in scores.iter().zip(labels) {
        for (sn, ln) in scores.iter().zip(labels) {
            if lp.is_malicious() && !ln.is_malicious() {
                pairs += 1.0;
                if sp > sn {
                    wins += 1.0;
                } else if sp == sn {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

#[test]
fn metrics_and_auc_match_brute_force_on_every_small_pattern() {
    let mut rng = SeededRng::new(1);
    for n in 1..=10usize {
        for mask in 0u32..(1 << n) {
            let actual: Vec<Label> = (0..n)
                .map(|i| {
                    if mask >> i & 1 == 1 {
                        Label::Malicious
                    } else {
                        Label::Benign
                    }
                })
                .collect();
            // Coarse scores so ties are common.
            let scores: Vec<f64> = (0..n).map(|_| rng.below(5) as f64 / 4.0).collect();
            let predicted: Vec<Label> = scores.iter().map(|&s| label_for(1.0 - s, 0.5)).collect();

            let m = confusion_metrics(&predicted, &actual).unwrap();
            let count = |p: Label, a: Label| {
                predicted
                    .iter()
                    .zip(&actual)
                    .filter(|(x, y)| **x == p && **y == a)
                    .count()
            };
            let tp = count(Label::Malicious, Label::Malicious) as f64;
            let fp = count(Label::Malicious, Label::Benign) as f64;
            let tn = count(Label::Benign, Label::Benign) as f64;
            let fn_ = count(Label::Benign, Label::Malicious) as f64;
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            assert_eq!(m.precision, precision);
            assert_eq!(m.recall, recall);
            assert!((m.f1 - f1).abs() < 1e-12);
            assert_eq!(m.accuracy, (tp + tn) / n as f64);

            let has_both = mask != 0 && mask != (1 << n) - 1;
            match roc_auc(&scores, &actual) {
                Ok(roc) => {
                    assert!(has_both);
                    assert!(
                        (roc.auc - brute_auc(&scores, &actual)).abs() < 1e-12,
                        "{scores:?} {actual:?}"
                    );
                }
                Err(_) => assert!(!has_both),
            }
        }
    }
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-5.0f64..5.0, rows * cols)
        .prop_map(move |d| Tensor::from_vec(rows, cols, d).unwrap())
}

proptest! {
    #[test]
    fn pull_away_ignores_positive_row_scaling(
        f in (2usize..8, 1usize..6).prop_flat_map(|(r, c)| matrix(r, c)),
        scales in prop::collection::vec(0.1f64..10.0, 8),
    ) {
        let scaled: Vec<Vec<f64>> = (0..f.rows())
            .map(|r| f.row(r).iter().map(|v| v * scales[r]).collect())
            .collect();
        let a = pull_away_term(&f).unwrap();
        let b = pull_away_term(&Tensor::from_rows(&scaled).unwrap()).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&a));
    }

    #[test]
    fn feature_matching_is_symmetric_and_zero_on_self(
        (a, b) in (1usize..6, 1usize..6, 1usize..5).prop_flat_map(|(r1, r2, c)| (matrix(r1, c), matrix(r2, c))),
    ) {
        let ab = feature_matching_loss(&a, &b).unwrap();
        prop_assert!((ab - feature_matching_loss(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(feature_matching_loss(&a, &a).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn quantile_is_a_member_with_enough_mass_below(
        probs in prop::collection::vec(0.0f64..1.0, 1..40),
        k in 2usize..10,
    ) {
        let eps = quantile_threshold(&probs, k).unwrap();
        prop_assert!(probs.contains(&eps));
        let at_or_below = probs.iter().filter(|p| **p <= eps).count();
        prop_assert!(at_or_below >= probs.len().div_ceil(k));
    }

    #[test]
    fn dbscan_assigns_every_point_once(
        x in (2usize..30, 1usize..4).prop_flat_map(|(r, c)| matrix(r, c)),
        eps in 0.1f64..4.0,
        min_pts in 1usize..5,
    ) {
        let report = dbscan_cluster(&x, None, eps, min_pts).unwrap();
        prop_assert_eq!(report.assignments.len(), x.rows());
        let in_clusters: usize = report.clusters.iter().map(|c| c.size()).sum();
        prop_assert_eq!(in_clusters + report.isolated(), x.rows());
        for (i, c) in report.clusters.iter().enumerate() {
            let members = report.assignments.iter().filter(|a| **a == Some(i)).count();
            prop_assert_eq!(members, c.size());
        }
    }

    #[test]
    fn tie_at_threshold_is_malicious(t in 0.0f64..1.0) {
        prop_assert_eq!(label_for(t, t), Label::Malicious);
    }
}
