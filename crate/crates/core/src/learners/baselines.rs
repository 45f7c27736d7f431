use crate::error::{Error, Result};
use crate::numerics;
use crate::types::{LabeledDataset, MahalanobisMetric, MetricForm};

/// Identity metric, i.e. plain l2 distance.
pub fn euclidean_baseline(d: usize) -> Result<MahalanobisMetric> {
    if d == 0 {
        return Err(Error::Config("metric dimension must be at least 1".into()));
    }
    Ok(MahalanobisMetric::identity(d))
}

/// Inverse of the training-feature covariance. The flag reports whether
/// eigenvalue flooring was needed (singular or ill-conditioned covariance).
pub fn precision_baseline(train: &LabeledDataset) -> Result<(MahalanobisMetric, bool)> {
    let cov = numerics::covariance(&train.feature_matrix())?;
    let inv = numerics::safe_inverse(&cov, None)?;
    let m = numerics::psd_project(&inv.matrix)?;
    Ok((MahalanobisMetric::from_symmetrized(m, MetricForm::Full)?, inv.floored))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RatingScale;
    use nalgebra::{dmatrix, DMatrix};

    fn dataset(rows: Vec<Vec<f64>>) -> LabeledDataset {
        let n = rows.len();
        let d = rows[0].len();
        LabeledDataset::from_rows(
            rows,
            vec![1; n],
            RatingScale::SURVEY,
            (0..d).map(|i| format!("f{i}")).collect(),
            "t",
        )
        .unwrap()
    }

    #[test]
    fn euclidean_is_identity() {
        assert_eq!(euclidean_baseline(3).unwrap().matrix(), &DMatrix::identity(3, 3));
        assert!(euclidean_baseline(0).is_err());
    }

    #[test]
    fn precision_of_identity_covariance() {
        let s = 0.75f64.sqrt();
        let ds = dataset(vec![vec![s, s], vec![s, -s], vec![-s, s], vec![-s, -s]]);
        let (m, floored) = precision_baseline(&ds).unwrap();
        assert!(!floored);
        assert!((m.matrix() - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn precision_of_correlated_pair() {
        // Rows (a, b), (-a, -b), (c, -c), (-c, c) give covariance [[1, .5], [.5, 1]]
        // when (2a^2 + 2c^2)/3 = 1 and (2a^2 - 2c^2)/3 = 0.5.
        let a = (1.125f64).sqrt();
        let c = (0.375f64).sqrt();
        let ds = dataset(vec![vec![a, a], vec![-a, -a], vec![c, -c], vec![-c, c]]);
        let (m, _) = precision_baseline(&ds).unwrap();
        let expected = dmatrix![4.0 / 3.0, -2.0 / 3.0; -2.0 / 3.0, 4.0 / 3.0];
        assert!((m.matrix() - expected).norm() < 1e-12);
    }

    #[test]
    fn duplicated_column_triggers_flooring() {
        let ds = dataset(vec![vec![1.0, 1.0], vec![2.0, 2.0], vec![4.0, 4.0]]);
        let (m, floored) = precision_baseline(&ds).unwrap();
        assert!(floored);
        assert!(m.matrix().iter().all(|v| v.is_finite()));
    }
}
