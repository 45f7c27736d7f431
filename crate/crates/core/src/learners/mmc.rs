//! Mahalanobis metric for clustering: keep similar pairs close while the
//! summed distance over dissimilar pairs stays at least one.
//!
//! The returned matrix is scaled so that `sum_{dissimilar} d_M = 1` exactly.

use nalgebra::{DMatrix, DVector};

use super::{add_outer, diff, guard_degenerate, projected_descent, quad, DescentSettings, OptimizerTrace};
use crate::error::{Error, Result};
use crate::numerics;
use crate::types::{LabeledDataset, MahalanobisMetric, MetricForm, PairSets};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmcOptions {
    pub form: MetricForm,
    pub max_iter: usize,
    pub tol: f64,
    /// Alternating-projection cycles per outer step (full form).
    pub max_projections: usize,
}

impl Default for MmcOptions {
    fn default() -> Self {
        MmcOptions {
            form: MetricForm::Full,
            max_iter: 1000,
            tol: 1e-5,
            max_projections: 100,
        }
    }
}

/// Dissimilar-pair difference vectors and the similar-pair scatter.
#[derive(Debug, Clone)]
pub struct MmcProblem {
    d: usize,
    dissimilar: Vec<Vec<f64>>,
    /// `sum_{similar} u u^T`; the similar-sum is `<M, similar_scatter>`.
    similar_scatter: DMatrix<f64>,
}

impl MmcProblem {
    pub fn new(train: &LabeledDataset, pairs: &PairSets) -> Result<Self> {
        if pairs.similar.is_empty() {
            return Err(Error::Constraint("MMC needs at least one similar pair".into()));
        }
        if pairs.dissimilar.is_empty() {
            return Err(Error::Constraint("MMC needs at least one dissimilar pair".into()));
        }
        let n = train.len();
        if let Some(&(i, j)) = pairs
            .similar
            .iter()
            .chain(&pairs.dissimilar)
            .find(|(i, j)| *i >= n || *j >= n)
        {
            return Err(Error::Constraint(format!(
                "pair ({i}, {j}) out of range for {n} instances"
            )));
        }
        let d = train.dim();
        let similar: Vec<Vec<f64>> = pairs.similar.iter().map(|&(i, j)| diff(train, i, j)).collect();
        let dissimilar = pairs.dissimilar.iter().map(|&(i, j)| diff(train, i, j)).collect();
        let mut similar_scatter = DMatrix::zeros(d, d);
        for u in &similar {
            add_outer(&mut similar_scatter, u, 1.0);
        }
        Ok(MmcProblem {
            d,
            dissimilar,
            similar_scatter,
        })
    }

    pub fn similar_sum(&self, m: &DMatrix<f64>) -> f64 {
        m.dot(&self.similar_scatter).max(0.0)
    }

    pub fn dissimilar_sum(&self, m: &DMatrix<f64>) -> f64 {
        self.dissimilar.iter().map(|u| quad(m, u).sqrt()).sum()
    }

    /// `g(M) = sum_S d^2 - ln(sum_D d)`, the unconstrained diagonal objective.
    pub fn diagonal_objective(&self, m: &DMatrix<f64>) -> f64 {
        let dis = self.dissimilar_sum(m);
        if dis <= 0.0 {
            return f64::INFINITY;
        }
        self.similar_sum(m) - dis.ln()
    }

    /// Gradient of [`diagonal_objective`](Self::diagonal_objective) with respect to the diagonal.
    fn diagonal_gradient(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut dis = 0.0;
        let mut dis_grad = DVector::<f64>::zeros(self.d);
        for u in &self.dissimilar {
            let dist = quad(m, u).sqrt();
            dis += dist;
            if dist > 1e-12 {
                for k in 0..self.d {
                    dis_grad[k] += u[k] * u[k] / (2.0 * dist);
                }
            }
        }
        let mut g = DMatrix::zeros(self.d, self.d);
        for k in 0..self.d {
            g[(k, k)] = self.similar_scatter[(k, k)] - dis_grad[k] / dis.max(1e-300);
        }
        g
    }

    /// Gradient of the dissimilar sum.
    fn dissimilar_gradient(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.d, self.d);
        for u in &self.dissimilar {
            let dist = quad(m, u).sqrt();
            if dist > 1e-12 {
                add_outer(&mut g, u, 0.5 / dist);
            }
        }
        g
    }

    /// Scale-free quality `sum_D d / sqrt(sum_S d^2)`; maximized by the full form.
    pub fn separation_ratio(&self, m: &DMatrix<f64>) -> f64 {
        let s = self.similar_sum(m);
        let dis = self.dissimilar_sum(m);
        if s <= 0.0 {
            if dis > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            dis / s.sqrt()
        }
    }

    /// Rescales `m` so the dissimilar sum equals one.
    fn normalize(&self, m: DMatrix<f64>) -> Result<DMatrix<f64>> {
        let dis = self.dissimilar_sum(&m);
        if !(dis > 0.0) {
            return Err(Error::Numerical(
                "MMC metric maps every dissimilar pair to distance zero".into(),
            ));
        }
        Ok(m / (dis * dis))
    }

    /// Alternates projections onto `{<M, S> <= 1}` and the PSD cone.
    fn project_feasible(&self, mut m: DMatrix<f64>, max_cycles: usize) -> (DMatrix<f64>, usize) {
        let s_norm2 = self.similar_scatter.norm_squared();
        let mut cycles = 0;
        while cycles < max_cycles {
            cycles += 1;
            let excess = m.dot(&self.similar_scatter) - 1.0;
            if excess > 0.0 && s_norm2 > 0.0 {
                m -= &self.similar_scatter * (excess / s_norm2);
            }
            m = numerics::psd_project_floored(&m, 0.0);
            if m.dot(&self.similar_scatter) <= 1.0 + 1e-9 {
                break;
            }
        }
        (m, cycles)
    }
}

/// Fits MMC in diagonal or full form.
pub fn fit_mmc(
    train: &LabeledDataset,
    pairs: &PairSets,
    opts: &MmcOptions,
) -> Result<(MahalanobisMetric, OptimizerTrace)> {
    let problem = MmcProblem::new(train, pairs)?;
    match opts.form {
        MetricForm::Diagonal => fit_diagonal(&problem, opts),
        MetricForm::Full => fit_full(&problem, opts),
    }
}

fn fit_diagonal(problem: &MmcProblem, opts: &MmcOptions) -> Result<(MahalanobisMetric, OptimizerTrace)> {
    let d = problem.d;
    let (m, trace) = projected_descent(
        DMatrix::identity(d, d),
        DescentSettings {
            max_iter: opts.max_iter,
            tol: opts.tol,
        },
        |m| problem.diagonal_objective(m),
        |m| problem.diagonal_gradient(m),
        |m| DMatrix::from_diagonal(&m.diagonal().map(|w| w.max(0.0))),
    );
    if !trace.converged {
        log::warn!(
            "diagonal MMC stopped after {} iterations without converging",
            trace.iterations
        );
    }
    let m = problem.normalize(guard_degenerate(m))?;
    let weights: Vec<f64> = m.diagonal().iter().copied().collect();
    Ok((MahalanobisMetric::diagonal(&weights)?, trace))
}

fn fit_full(problem: &MmcProblem, opts: &MmcOptions) -> Result<(MahalanobisMetric, OptimizerTrace)> {
    let d = problem.d;
    let mut trace = OptimizerTrace::default();
    let (mut m, cycles) = problem.project_feasible(DMatrix::identity(d, d), opts.max_projections);
    trace.projection_count += cycles;
    let mut ratio = problem.separation_ratio(&m);
    if !ratio.is_finite() {
        // Every similar pair already has distance zero.
        trace.converged = true;
        let m = problem.normalize(guard_degenerate(m))?;
        return Ok((MahalanobisMetric::from_symmetrized(m, MetricForm::Full)?, trace));
    }
    let mut step = f64::NAN;
    let mut stalled = 0;
    for _ in 0..opts.max_iter {
        let g = problem.dissimilar_gradient(&m);
        let g_norm = g.norm();
        if !(g_norm > 0.0) {
            trace.converged = true;
            break;
        }
        if step.is_nan() {
            step = 0.1 * m.norm().max(1e-12) / g_norm;
        }
        let (trial, cycles) = problem.project_feasible(&m + &g * step, opts.max_projections);
        trace.projection_count += cycles;
        let trial_ratio = problem.separation_ratio(&trial);
        if trial_ratio.is_finite() && trial_ratio > ratio {
            let gain = (trial_ratio - ratio) / ratio.abs().max(1e-12);
            m = trial;
            ratio = trial_ratio;
            trace.record(ratio);
            step *= 1.05;
            stalled = 0;
            if gain < opts.tol {
                trace.converged = true;
                break;
            }
        } else {
            step *= 0.5;
            stalled += 1;
            if stalled > 60 {
                trace.converged = true;
                break;
            }
        }
    }
    if !trace.converged {
        log::warn!(
            "full MMC stopped after {} accepted steps without converging",
            trace.iterations
        );
    }
    let m = problem.normalize(guard_degenerate(m))?;
    Ok((MahalanobisMetric::from_symmetrized(m, MetricForm::Full)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::build_pairs;
    use crate::types::RatingScale;

    fn dataset(rows: Vec<Vec<f64>>, labels: Vec<i32>) -> LabeledDataset {
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

    #[test]
    fn one_dimensional_closed_form() {
        // Similar pair (0, 0.1), dissimilar pair (0, 10): w* = 50 before
        // normalization, and sqrt(w) * 10 = 1 after it.
        let ds = dataset(vec![vec![0.0], vec![0.1], vec![0.0], vec![10.0]], vec![1, 1, 2, 3]);
        let pairs = PairSets {
            similar: vec![(0, 1)],
            dissimilar: vec![(2, 3)],
        };
        let opts = MmcOptions {
            form: MetricForm::Diagonal,
            tol: 1e-12,
            ..Default::default()
        };
        let (m, trace) = fit_mmc(&ds, &pairs, &opts).unwrap();
        assert!((m.matrix()[(0, 0)] - 0.01).abs() < 1e-9);
        assert!(trace.objective_values.windows(2).all(|p| p[1] <= p[0]));

        let full = MmcOptions {
            tol: 1e-12,
            ..Default::default()
        };
        let (m, _) = fit_mmc(&ds, &pairs, &full).unwrap();
        assert!((m.matrix()[(0, 0)] - 0.01).abs() < 1e-9);
    }

    #[test]
    fn single_class_is_a_constraint_error() {
        let ds = dataset(vec![vec![0.0], vec![1.0], vec![2.0]], vec![2, 2, 2]);
        let pairs = build_pairs(&ds);
        assert!(matches!(
            fit_mmc(&ds, &pairs, &MmcOptions::default()),
            Err(Error::Constraint(_))
        ));
    }

    #[test]
    fn full_form_hits_unit_dissimilar_sum() {
        let ds = dataset(
            vec![
                vec![0.0, 0.3, 1.0],
                vec![0.2, -0.4, 0.9],
                vec![1.0, 0.1, -0.3],
                vec![1.1, 0.5, 0.2],
                vec![2.0, -0.2, 0.4],
                vec![2.2, 0.0, -0.8],
            ],
            vec![1, 1, 2, 2, 3, 3],
        );
        let pairs = build_pairs(&ds);
        let (m, trace) = fit_mmc(&ds, &pairs, &MmcOptions::default()).unwrap();
        let problem = MmcProblem::new(&ds, &pairs).unwrap();
        assert!((problem.dissimilar_sum(m.matrix()) - 1.0).abs() < 1e-3);
        assert!(trace.objective_values.windows(2).all(|p| p[1] >= p[0]));
        assert!(trace.projection_count > 0);
    }

    #[test]
    fn diagonal_form_drops_a_noise_axis() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..24 {
            let label = 1 + (i % 3) as i32;
            rows.push(vec![
                3.0 * f64::from(label) + rng.random_range(-0.2..0.2),
                rng.random_range(-1.0..1.0),
            ]);
            labels.push(label);
        }
        let ds = dataset(rows, labels);
        let pairs = build_pairs(&ds);
        let problem = MmcProblem::new(&ds, &pairs).unwrap();
        // Grid oracle over (w0, w1): the best noise weight is zero.
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for a in 1..=200 {
            for b in 0..=50 {
                let (w0, w1) = (a as f64 * 5e-4, b as f64 * 2e-4);
                let g = problem.diagonal_objective(&DMatrix::from_diagonal(&nalgebra::dvector![w0, w1]));
                if g < best.0 {
                    best = (g, w0, w1);
                }
            }
        }
        assert_eq!(best.2, 0.0);
        let opts = MmcOptions {
            form: MetricForm::Diagonal,
            ..Default::default()
        };
        let (m, _) = fit_mmc(&ds, &pairs, &opts).unwrap();
        assert!(m.matrix()[(1, 1)] <= 1e-6 * m.matrix()[(0, 0)], "{}", m.matrix());
    }
}
