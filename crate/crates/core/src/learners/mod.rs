//! Metric learners (LMNN, MMC, LSML) and the Euclidean / precision baselines.
//!
//! The iterative learners share [`projected_descent`]: gradient steps with
//! Armijo backtracking, followed by a projection back onto the learner's
//! feasible set. Accepted steps never increase the objective, so every
//! [`OptimizerTrace`] is monotone.

mod baselines;
mod lmnn;
mod lsml;
mod mmc;

pub use baselines::{euclidean_baseline, precision_baseline};
pub use lmnn::{fit_lmnn, LmnnOptions, LmnnProblem};
pub use lsml::{fit_lsml, LsmlOptions, LsmlProblem};
pub use mmc::{fit_mmc, MmcOptions, MmcProblem};

use nalgebra::DMatrix;

use crate::types::LabeledDataset;

/// Diagnostics reported by every iterative learner.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerTrace {
    /// Accepted steps.
    pub iterations: usize,
    /// Objective after each accepted step.
    pub objective_values: Vec<f64>,
    pub converged: bool,
    pub projection_count: usize,
}

impl OptimizerTrace {
    fn record(&mut self, value: f64) {
        self.iterations += 1;
        self.objective_values.push(value);
    }
}

/// Trace below which a learned matrix is considered collapsed.
pub const DEGENERATE_TRACE: f64 = 1e-8;

/// Rescales a collapsed matrix to trace `d`; a zero matrix becomes the identity.
pub(crate) fn guard_degenerate(m: DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    let tr = m.trace();
    if tr >= DEGENERATE_TRACE {
        return m;
    }
    log::warn!("learned metric collapsed (trace {tr:e}); rescaling to trace {d}");
    if tr > 0.0 {
        m * (d as f64 / tr)
    } else {
        DMatrix::identity(d, d)
    }
}

/// `u^T M u` without validation, clamped at zero.
pub(crate) fn quad(m: &DMatrix<f64>, u: &[f64]) -> f64 {
    let d = u.len();
    let mut q = 0.0;
    for j in 0..d {
        let col = m.column(j);
        let mut s = 0.0;
        for i in 0..d {
            s += col[i] * u[i];
        }
        q += s * u[j];
    }
    q.max(0.0)
}

/// `acc += w * u u^T`
pub(crate) fn add_outer(acc: &mut DMatrix<f64>, u: &[f64], w: f64) {
    let d = u.len();
    for j in 0..d {
        let wj = w * u[j];
        for i in 0..d {
            acc[(i, j)] += wj * u[i];
        }
    }
}

/// `sum_{i,j} W_ij (x_i - x_j)(x_i - x_j)^T` for an arbitrary (possibly
/// asymmetric) weight matrix, computed as `X^T (diag(S 1) - S) X` with `S = W + W^T`.
pub(crate) fn pair_scatter(x: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let s = w + w.transpose();
    let mut lap = -s.clone();
    for i in 0..s.nrows() {
        lap[(i, i)] += s.row(i).sum();
    }
    let g = x.transpose() * lap * x;
    crate::numerics::symmetrize(&g)
}

pub(crate) fn diff(dataset: &LabeledDataset, i: usize, j: usize) -> Vec<f64> {
    dataset.row(i).iter().zip(dataset.row(j)).map(|(a, b)| a - b).collect()
}

/// Shared settings for [`projected_descent`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct DescentSettings {
    pub max_iter: usize,
    pub tol: f64,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

/// Minimizes `objective` from `start` by projected gradient descent.
///
/// `objective` may return `+inf` outside its domain; such trials are rejected
/// like any other failed line-search step. Returns the last accepted iterate.
pub(crate) fn projected_descent(
    start: DMatrix<f64>,
    settings: DescentSettings,
    objective: impl Fn(&DMatrix<f64>) -> f64,
    gradient: impl Fn(&DMatrix<f64>) -> DMatrix<f64>,
    project: impl Fn(DMatrix<f64>) -> DMatrix<f64>,
) -> (DMatrix<f64>, OptimizerTrace) {
    let mut trace = OptimizerTrace::default();
    let mut m = start;
    let mut value = objective(&m);
    let mut step = f64::NAN;

    for _ in 0..settings.max_iter {
        let g = gradient(&m);
        let g_norm = g.norm();
        if !(g_norm > 0.0) || !g_norm.is_finite() {
            trace.converged = g_norm == 0.0;
            return (m, trace);
        }
        if step.is_nan() {
            step = m.norm().max(1.0) / g_norm;
        }
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = project(&m - &g * step);
            trace.projection_count += 1;
            let trial_value = objective(&trial);
            let decrease = g.dot(&(&m - &trial));
            if trial_value.is_finite() && trial_value <= value - ARMIJO * decrease {
                accepted = Some((trial, trial_value));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, trial_value)) = accepted else {
            // No descent at machine precision.
            trace.converged = true;
            return (m, trace);
        };
        let change = value - trial_value;
        m = trial;
        value = trial_value;
        trace.record(value);
        step *= 2.0;
        if change <= settings.tol * value.abs().max(1e-12) {
            trace.converged = true;
            return (m, trace);
        }
    }
    (m, trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn scatter_matches_explicit_sum() {
        let x = dmatrix![0.0, 1.0; 2.0, -1.0; 0.5, 3.0];
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 2.0;
        w[(2, 0)] = -0.5;
        let mut expected = DMatrix::zeros(2, 2);
        for (i, j, wij) in [(0usize, 1usize, 2.0), (2, 0, -0.5)] {
            let u: Vec<f64> = (0..2).map(|k| x[(i, k)] - x[(j, k)]).collect();
            add_outer(&mut expected, &u, wij);
        }
        assert!((pair_scatter(&x, &w) - expected).norm() < 1e-12);
    }

    #[test]
    fn descent_solves_a_projected_quadratic() {
        // minimize ||M - T||_F^2 over PSD matrices, T indefinite.
        let target = dmatrix![1.0, 0.0; 0.0, -2.0];
        let (m, trace) = projected_descent(
            DMatrix::identity(2, 2),
            DescentSettings {
                max_iter: 200,
                tol: 1e-14,
            },
            |m| (m - &target).norm_squared(),
            |m| (m - &target) * 2.0,
            |m| crate::numerics::psd_project(&m).unwrap(),
        );
        assert!((m - dmatrix![1.0, 0.0; 0.0, 0.0]).norm() < 1e-6);
        assert!(trace.objective_values.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(trace.iterations, trace.objective_values.len());
    }

    #[test]
    fn degenerate_guard() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert_eq!(guard_degenerate(z), DMatrix::identity(3, 3));
        let tiny = DMatrix::<f64>::identity(2, 2) * 1e-12;
        assert!((guard_degenerate(tiny).trace() - 2.0).abs() < 1e-9);
    }
}
