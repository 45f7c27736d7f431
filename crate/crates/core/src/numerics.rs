//! Dense symmetric linear algebra used by the learners and baselines.
//!
//! Eigendecompositions are delegated to `nalgebra::SymmetricEigen`; everything
//! else here is the eigenvalue policy layered on top (clamping, flooring).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::types::SYMMETRY_TOL;

/// Relative eigenvalue floor used by inversion and log-determinant.
pub const RELATIVE_FLOOR: f64 = 1e-10;

pub fn max_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// `(A + A^T) / 2`; exactly symmetric in floating point.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::Invariant(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL {
        return Err(Error::Invariant(format!(
            "matrix asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}"
        )));
    }
    Ok(())
}

pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    SymmetricEigen::new(symmetrize(a)).eigenvalues
}

fn reconstruct(eig: &SymmetricEigen<f64, nalgebra::Dyn>, values: &DVector<f64>) -> DMatrix<f64> {
    let q = &eig.eigenvectors;
    let scaled = q * DMatrix::from_diagonal(values);
    symmetrize(&(scaled * q.transpose()))
}

/// Frobenius-nearest PSD matrix: negative eigenvalues are clamped to zero.
pub fn psd_project(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(a)?;
    Ok(psd_project_floored(a, 0.0))
}

/// Projection that clamps eigenvalues to at least `floor` (`floor >= 0`).
/// The input is symmetrized first.
pub(crate) fn psd_project_floored(a: &DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(a));
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return symmetrize(a);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    reconstruct(&eig, &clamped)
}

/// Result of [`safe_inverse`].
#[derive(Debug, Clone)]
pub struct SafeInverse {
    pub matrix: DMatrix<f64>,
    /// Set when at least one eigenvalue was raised to the floor (ill-conditioned input).
    pub floored: bool,
}

/// Inverse through the eigendecomposition with eigenvalues floored from below.
///
/// `floor` defaults to `1e-10 * λ_max` (or `1e-10` when `λ_max <= 0`).
pub fn safe_inverse(a: &DMatrix<f64>, floor: Option<f64>) -> Result<SafeInverse> {
    check_symmetric(a)?;
    let eig = SymmetricEigen::new(symmetrize(a));
    let lmax = eig.eigenvalues.max();
    let floor = floor.unwrap_or_else(|| default_floor(lmax));
    let mut floored = false;
    let inv_values = eig.eigenvalues.map(|l| {
        if l < floor {
            floored = true;
            1.0 / floor
        } else {
            1.0 / l
        }
    });
    if floored {
        log::warn!("safe_inverse: eigenvalues floored at {floor:e}; input is ill-conditioned");
    }
    Ok(SafeInverse {
        matrix: reconstruct(&eig, &inv_values),
        floored,
    })
}

fn default_floor(lmax: f64) -> f64 {
    if lmax > 0.0 {
        RELATIVE_FLOOR * lmax
    } else {
        RELATIVE_FLOOR
    }
}

/// Sum of log-eigenvalues of a symmetric positive definite matrix.
///
/// Fails when the smallest eigenvalue does not exceed the relative floor.
pub fn logdet(a: &DMatrix<f64>) -> Result<f64> {
    check_symmetric(a)?;
    let values = symmetric_eigenvalues(a);
    let lmax = values.max();
    let lmin = values.min();
    if lmax <= 0.0 || lmin <= RELATIVE_FLOOR * lmax {
        return Err(Error::Numerical(format!(
            "logdet of a matrix that is not positive definite (eigenvalues in [{lmin:e}, {lmax:e}])"
        )));
    }
    Ok(values.iter().map(|l| l.ln()).sum())
}

/// Sample covariance (denominator `n - 1`) of the rows of `x`.
pub fn covariance(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::Config(format!("covariance needs at least 2 rows, got {n}")));
    }
    let means = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &means;
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    Ok(symmetrize(&cov))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm()
    }

    #[test]
    fn project_clamps_negative_diagonal() {
        let p = psd_project(&dmatrix![2.0, 0.0; 0.0, -3.0]).unwrap();
        assert!(frob(&p, &dmatrix![2.0, 0.0; 0.0, 0.0]) < 1e-12);
    }

    #[test]
    fn project_off_diagonal_swap() {
        let p = psd_project(&dmatrix![0.0, 1.0; 1.0, 0.0]).unwrap();
        assert!(frob(&p, &dmatrix![0.5, 0.5; 0.5, 0.5]) < 1e-12);
    }

    #[test]
    fn project_keeps_psd_input() {
        let a = dmatrix![2.0, 1.0; 1.0, 2.0];
        assert!(frob(&psd_project(&a).unwrap(), &a) < 1e-9);
    }

    #[test]
    fn project_rejects_asymmetric() {
        assert!(matches!(
            psd_project(&dmatrix![1.0, 2.0; 0.0, 1.0]),
            Err(Error::Invariant(_))
        ));
    }

    #[test]
    fn inverse_examples() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert!(frob(&safe_inverse(&id, None).unwrap().matrix, &id) < 1e-12);
        let inv = safe_inverse(&dmatrix![2.0, 0.0; 0.0, 4.0], None).unwrap();
        assert!(frob(&inv.matrix, &dmatrix![0.5, 0.0; 0.0, 0.25]) < 1e-12);
        assert!(!inv.floored);
        let inv = safe_inverse(&dmatrix![1.0, 0.5; 0.5, 1.0], None).unwrap();
        let expected = dmatrix![4.0 / 3.0, -2.0 / 3.0; -2.0 / 3.0, 4.0 / 3.0];
        assert!(frob(&inv.matrix, &expected) < 1e-12);
    }

    #[test]
    fn inverse_floors_singular_input() {
        let inv = safe_inverse(&dmatrix![1.0, 1.0; 1.0, 1.0], None).unwrap();
        assert!(inv.floored);
        assert!(inv.matrix.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(logdet(&DMatrix::identity(4, 4)).unwrap(), 0.0);
        let e = std::f64::consts::E;
        assert!((logdet(&dmatrix![e, 0.0; 0.0, e]).unwrap() - 2.0).abs() < 1e-12);
        assert!((logdet(&dmatrix![2.0, 1.0; 1.0, 2.0]).unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!(matches!(
            logdet(&dmatrix![1.0, 1.0; 1.0, 1.0]),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn covariance_examples() {
        let c = covariance(&dmatrix![1.0, 2.0; 1.0, 2.0; 1.0, 2.0]).unwrap();
        assert_eq!(c, DMatrix::zeros(2, 2));
        let c = covariance(&dmatrix![0.0, 0.0; 2.0, 0.0]).unwrap();
        assert!(frob(&c, &dmatrix![2.0, 0.0; 0.0, 0.0]) < 1e-15);
        assert!(matches!(covariance(&dmatrix![1.0, 2.0]), Err(Error::Config(_))));
    }

    #[test]
    fn covariance_of_decorrelated_columns_is_identity() {
        // Columns are zero-mean, unit-variance (n-1 denominator) and orthogonal.
        let x = dmatrix![1.0, 1.0; 1.0, -1.0; -1.0, 1.0; -1.0, -1.0] * 0.75f64.sqrt();
        let c = covariance(&x).unwrap();
        assert!(frob(&c, &DMatrix::identity(2, 2)) < 1e-12);
    }

    /// Cofactor expansion; independent of any eigendecomposition.
    fn brute_det(a: &DMatrix<f64>) -> f64 {
        let n = a.nrows();
        if n == 1 {
            return a[(0, 0)];
        }
        (0..n)
            .map(|j| {
                let minor = a.clone().remove_row(0).remove_column(j);
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sign * a[(0, j)] * brute_det(&minor)
            })
            .sum()
    }

    fn spd(values: &[f64], n: usize) -> DMatrix<f64> {
        let b = DMatrix::from_row_slice(n, n, &values[..n * n]);
        &b * b.transpose() + DMatrix::identity(n, n) * 0.1
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(values in prop::collection::vec(-5.0f64..5.0, 9)) {
            let a = symmetrize(&DMatrix::from_row_slice(3, 3, &values));
            let p = psd_project(&a).unwrap();
            let pp = psd_project(&p).unwrap();
            prop_assert!(frob(&p, &pp) < 1e-9);
            prop_assert!(symmetric_eigenvalues(&p).min() > -1e-9);
        }

        #[test]
        fn inverse_times_input_is_identity(values in prop::collection::vec(-2.0f64..2.0, 9)) {
            let a = spd(&values, 3);
            let inv = safe_inverse(&a, None).unwrap();
            prop_assume!(!inv.floored);
            prop_assert!(frob(&(inv.matrix * &a), &DMatrix::identity(3, 3)) < 1e-6);
        }

        #[test]
        fn logdet_matches_cofactor_determinant(
            values in prop::collection::vec(-2.0f64..2.0, 9),
            n in 2usize..=3,
        ) {
            let a = spd(&values, n);
            let expected = brute_det(&a).ln();
            let got = logdet(&a).unwrap();
            prop_assert!((got - expected).abs() <= 1e-8 * expected.abs().max(1.0));
        }

        #[test]
        fn covariance_is_symmetric_psd(values in prop::collection::vec(-10.0f64..10.0, 12)) {
            let c = covariance(&DMatrix::from_row_slice(4, 3, &values)).unwrap();
            prop_assert_eq!(max_asymmetry(&c), 0.0);
            prop_assert!(symmetric_eigenvalues(&c).min() > -1e-9);
        }
    }
}
