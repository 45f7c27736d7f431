//! Triplet-violation loss and inverse-distance-weighted kNN losses.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::types::{LabeledDataset, MahalanobisMetric, TripletSet};

/// Neighbors closer than this count as exact matches.
pub const ZERO_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LossKind {
    TripletViolation,
    KnnL1,
    KnnL2,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::TripletViolation, LossKind::KnnL1, LossKind::KnnL2];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::TripletViolation => "triplet",
            LossKind::KnnL1 => "knn_l1",
            LossKind::KnnL2 => "knn_l2",
        }
    }
}

fn pairwise_distances(metric: &MahalanobisMetric, data: &LabeledDataset) -> Result<Vec<f64>> {
    let n = data.len();
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = metric.distance(data.row(i), data.row(j))?;
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    Ok(out)
}

/// Fraction of triplets with `d_M(a, b) > d_M(a, c)`. Ties count as satisfied.
pub fn triplet_violation_loss(metric: &MahalanobisMetric, test: &LabeledDataset, triplets: &TripletSet) -> Result<f64> {
    if triplets.is_empty() {
        return Err(Error::Evaluation("triplet set is empty".into()));
    }
    let n = test.len();
    if let Some(t) = triplets.triplets.iter().find(|t| t.a.max(t.b).max(t.c) >= n) {
        return Err(Error::Evaluation(format!("triplet {t} out of range for {n} instances")));
    }
    let dist = pairwise_distances(metric, test)?;
    let violated = triplets
        .triplets
        .iter()
        .filter(|t| dist[t.a * n + t.b] > dist[t.a * n + t.c])
        .count();
    Ok(violated as f64 / triplets.len() as f64)
}

/// Inverse-distance-weighted mean label of the `k` nearest training points.
///
/// Distance ties at the k-th place go to the lower training index. When a
/// neighbor sits at (numerically) zero distance, the prediction is the plain
/// mean label of the zero-distance neighbors.
pub fn knn_predict(metric: &MahalanobisMetric, train: &LabeledDataset, x: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if k > train.len() {
        return Err(Error::Config(format!(
            "k = {k} exceeds the {} training instances",
            train.len()
        )));
    }
    let mut neighbors = train
        .rows()
        .enumerate()
        .map(|(j, row)| metric.distance(x, row).map(|d| (d, j)))
        .collect::<Result<Vec<_>>>()?;
    neighbors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    neighbors.truncate(k);

    let exact: Vec<f64> = neighbors
        .iter()
        .filter(|(d, _)| *d < ZERO_DISTANCE)
        .map(|&(_, j)| f64::from(train.label(j)))
        .collect();
    if !exact.is_empty() {
        return Ok(exact.iter().sum::<f64>() / exact.len() as f64);
    }
    let total: f64 = neighbors.iter().map(|(d, _)| 1.0 / d).sum();
    Ok(neighbors
        .iter()
        .map(|&(d, j)| (1.0 / d) / total * f64::from(train.label(j)))
        .sum())
}

/// Per-instance predictions for every row of `test`, in row order.
pub fn knn_predict_batch(
    exec: Exec,
    metric: &MahalanobisMetric,
    train: &LabeledDataset,
    test: &LabeledDataset,
    k: usize,
) -> Result<Vec<f64>> {
    exec.map_range(test.len(), |i| knn_predict(metric, train, test.row(i), k))
        .into_iter()
        .collect()
}

/// Mean absolute and mean squared kNN prediction errors over `test`.
pub fn knn_losses(
    exec: Exec,
    metric: &MahalanobisMetric,
    train: &LabeledDataset,
    test: &LabeledDataset,
    k: usize,
) -> Result<(f64, f64)> {
    let predictions = knn_predict_batch(exec, metric, train, test, k)?;
    let n = test.len() as f64;
    let (mut l1, mut l2) = (0.0, 0.0);
    for (p, &y) in predictions.iter().zip(test.labels()) {
        let err = p - f64::from(y);
        l1 += err.abs();
        l2 += err * err;
    }
    Ok((l1 / n, l2 / n))
}

pub fn knn_l1(metric: &MahalanobisMetric, train: &LabeledDataset, test: &LabeledDataset, k: usize) -> Result<f64> {
    knn_losses(Exec::default(), metric, train, test, k).map(|(l1, _)| l1)
}

pub fn knn_l2(metric: &MahalanobisMetric, train: &LabeledDataset, test: &LabeledDataset, k: usize) -> Result<f64> {
    knn_losses(Exec::default(), metric, train, test, k).map(|(_, l2)| l2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{RatingScale, Triplet, TripletVariant};

    fn ds(rows: Vec<Vec<f64>>, labels: Vec<i32>) -> LabeledDataset {
        let d = rows[0].len();
        LabeledDataset::from_rows(
            rows,
            labels,
            RatingScale::SURVEY,
            (0..d).map(|i| format!("f{i}")).collect(),
            "t",
        )
        .unwrap()
    }

    fn one(t: Triplet) -> TripletSet {
        TripletSet {
            triplets: vec![t],
            sigma: 0.0,
            variant: TripletVariant::Literal,
        }
    }

    #[test]
    fn triplet_loss_examples() {
        let test = ds(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 0.0]], vec![1, 2, 3]);
        let m = MahalanobisMetric::identity(2);
        assert_eq!(
            triplet_violation_loss(&m, &test, &one(Triplet::new(0, 1, 2))).unwrap(),
            0.0
        );
        assert_eq!(
            triplet_violation_loss(&m, &test, &one(Triplet::new(0, 2, 1))).unwrap(),
            1.0
        );
        let empty = TripletSet {
            triplets: vec![],
            sigma: 0.0,
            variant: TripletVariant::Literal,
        };
        assert!(matches!(
            triplet_violation_loss(&m, &test, &empty),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn ties_satisfy_the_constraint() {
        let test = ds(vec![vec![0.0], vec![1.0], vec![-1.0]], vec![1, 2, 3]);
        let m = MahalanobisMetric::identity(1);
        assert_eq!(
            triplet_violation_loss(&m, &test, &one(Triplet::new(0, 1, 2))).unwrap(),
            0.0
        );
    }

    #[test]
    fn knn_examples() {
        let m = MahalanobisMetric::identity(1);
        let train = ds(vec![vec![1.0], vec![3.0], vec![10.0]], vec![2, 4, 5]);
        let y = knn_predict(&m, &train, &[0.0], 2).unwrap();
        assert!((y - 2.5).abs() < 1e-12);
        assert_eq!(knn_predict(&m, &train, &[10.0], 2).unwrap(), 5.0);
        let same = ds(vec![vec![1.0], vec![3.0], vec![10.0]], vec![3, 3, 3]);
        assert!((knn_predict(&m, &same, &[0.3], 3).unwrap() - 3.0).abs() < 1e-12);
        assert!(knn_predict(&m, &train, &[0.0], 4).is_err());
    }

    #[test]
    fn knn_boundary_ties_take_lower_index() {
        let m = MahalanobisMetric::identity(1);
        let train = ds(vec![vec![-1.0], vec![1.0]], vec![1, 5]);
        assert_eq!(knn_predict(&m, &train, &[0.0], 1).unwrap(), 1.0);
    }

    #[test]
    fn knn_loss_arithmetic() {
        let m = MahalanobisMetric::identity(1);
        let train = ds(vec![vec![1.0], vec![3.0], vec![10.0]], vec![2, 4, 5]);
        let test = ds(vec![vec![0.0], vec![0.0]], vec![4, 4]);
        let (l1, l2) = knn_losses(Exec::Sequential, &m, &train, &test, 2).unwrap();
        assert!((l1 - 1.5).abs() < 1e-12 && (l2 - 2.25).abs() < 1e-12);
        let (l1, l2) = knn_losses(Exec::default(), &m, &train, &train, 1).unwrap();
        assert_eq!((l1, l2), (0.0, 0.0));
    }
}
