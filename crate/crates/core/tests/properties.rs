mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use fairmetric::constraints::build_triplets;
use fairmetric::evaluation::triplet_violation_loss;
use fairmetric::types::{LabeledDataset, MahalanobisMetric, MetricForm, RatingScale, TripletVariant};

fn psd(d: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-2.0..2.0f64, d * d).prop_map(move |v| {
        let a = DMatrix::from_vec(d, d, v);
        &a * a.transpose()
    })
}

fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0..5.0f64, d)
}

proptest! {
    #[test]
    fn triangle_inequality(m in psd(3), x in point(3), y in point(3), z in point(3)) {
        let metric = MahalanobisMetric::new(m, MetricForm::Full).unwrap();
        let xy = metric.distance(&x, &y).unwrap();
        let yz = metric.distance(&y, &z).unwrap();
        let xz = metric.distance(&x, &z).unwrap();
        prop_assert!(xz <= xy + yz + 1e-9 * (1.0 + xy + yz));
    }

    #[test]
    fn distance_squared_matches_quadratic_form(m in psd(4), x in point(4), y in point(4)) {
        let metric = MahalanobisMetric::new(m.clone(), MetricForm::Full).unwrap();
        let d = metric.distance(&x, &y).unwrap();
        let sq = metric.squared_distance(&x, &y).unwrap();
        prop_assert!((d * d - sq).abs() <= 1e-9 * sq.max(1.0));
        prop_assert!((sq - common::quad(&m, &x, &y)).abs() <= 1e-9 * sq.max(1.0));
        prop_assert!(metric.distance(&x, &x).unwrap() == 0.0);
        prop_assert!((d - metric.distance(&y, &x).unwrap()).abs() <= 1e-12 * d.max(1.0));
    }

    #[test]
    fn scaling_preserves_triplet_loss(
        m in psd(2),
        t in 0.01..100.0f64,
        rows in prop::collection::vec(point(2), 6..12),
        seed_labels in prop::collection::vec(1..=5i32, 12),
    ) {
        let n = rows.len();
        let ds = LabeledDataset::from_rows(
            rows, seed_labels[..n].to_vec(), RatingScale::SURVEY, vec!["a".into(), "b".into()], "p",
        ).unwrap();
        let set = build_triplets(&ds, 0.0, TripletVariant::Symmetric).unwrap();
        prop_assume!(!set.is_empty());
        let metric = MahalanobisMetric::new(m, MetricForm::Full).unwrap();
        let base = triplet_violation_loss(&metric, &ds, &set).unwrap();
        let scaled = triplet_violation_loss(&metric.scaled(t).unwrap(), &ds, &set).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!((base - scaled).abs() <= 1e-9);
    }
}
