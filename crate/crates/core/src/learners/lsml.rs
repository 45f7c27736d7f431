//! Least squared-residual metric learning from triplets, with a weighted
//! log-det divergence to the identity as regularizer:
//!
//! `J(M) = alpha * (tr M - logdet M - d) + sum_{(a,b,c)} max(0, d_M(a,b) - d_M(a,c))^2`

use nalgebra::DMatrix;

use super::{add_outer, guard_degenerate, projected_descent, quad, DescentSettings, OptimizerTrace};
use crate::error::{Error, Result};
use crate::numerics;
use crate::types::{LabeledDataset, MahalanobisMetric, MetricForm, TripletSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsmlOptions {
    /// Weight of the log-det regularizer.
    pub alpha: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LsmlOptions {
    fn default() -> Self {
        LsmlOptions {
            alpha: 0.01,
            max_iter: 1000,
            tol: 1e-6,
        }
    }
}

/// Relative eigenvalue floor keeping iterates inside the log-det domain.
const EIGEN_FLOOR: f64 = 1e-10;

/// Precomputed difference vectors `x_a - x_b` and `x_a - x_c` per triplet.
#[derive(Debug, Clone)]
pub struct LsmlProblem {
    d: usize,
    near: Vec<f64>,
    far: Vec<f64>,
    alpha: f64,
}

impl LsmlProblem {
    pub fn new(train: &LabeledDataset, triplets: &TripletSet, alpha: f64) -> Result<Self> {
        if triplets.is_empty() {
            return Err(Error::Constraint("LSML needs at least one triplet".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {alpha}")));
        }
        let n = train.len();
        let d = train.dim();
        let mut near = Vec::with_capacity(triplets.len() * d);
        let mut far = Vec::with_capacity(triplets.len() * d);
        for t in &triplets.triplets {
            if t.a.max(t.b).max(t.c) >= n {
                return Err(Error::Constraint(format!("triplet {t} out of range for {n} instances")));
            }
            let (xa, xb, xc) = (train.row(t.a), train.row(t.b), train.row(t.c));
            near.extend(xa.iter().zip(xb).map(|(p, q)| p - q));
            far.extend(xa.iter().zip(xc).map(|(p, q)| p - q));
        }
        Ok(LsmlProblem { d, near, far, alpha })
    }

    fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.near.chunks_exact(self.d).zip(self.far.chunks_exact(self.d))
    }

    /// Sum of squared hinge residuals.
    pub fn residual(&self, m: &DMatrix<f64>) -> f64 {
        self.pairs()
            .map(|(u, v)| {
                let r = quad(m, u).sqrt() - quad(m, v).sqrt();
                if r > 0.0 {
                    r * r
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// `tr M - logdet M - d`, or `+inf` when `M` is not positive definite.
    pub fn regularizer(&self, m: &DMatrix<f64>) -> f64 {
        match numerics::logdet(m) {
            Ok(ld) => m.trace() - ld - self.d as f64,
            Err(_) => f64::INFINITY,
        }
    }

    pub fn objective(&self, m: &DMatrix<f64>) -> f64 {
        let reg = self.regularizer(m);
        if !reg.is_finite() {
            return f64::INFINITY;
        }
        self.alpha * reg + self.residual(m)
    }

    /// Analytic gradient. A zero far distance contributes a zero subgradient.
    pub fn gradient(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let inv = numerics::safe_inverse(m, None)?;
        let mut g = (DMatrix::identity(self.d, self.d) - inv.matrix) * self.alpha;
        for (u, v) in self.pairs() {
            let dn = quad(m, u).sqrt();
            let df = quad(m, v).sqrt();
            let r = dn - df;
            if r > 0.0 {
                // d/dM of sqrt(u^T M u) is u u^T / (2 sqrt(u^T M u)); the factor 2 from r^2 cancels.
                add_outer(&mut g, u, r / dn);
                if df > 1e-12 {
                    add_outer(&mut g, v, -r / df);
                }
            }
        }
        Ok(numerics::symmetrize(&g))
    }
}

/// Fits LSML by projected gradient descent from the identity.
pub fn fit_lsml(
    train: &LabeledDataset,
    triplets: &TripletSet,
    opts: &LsmlOptions,
) -> Result<(MahalanobisMetric, OptimizerTrace)> {
    let problem = LsmlProblem::new(train, triplets, opts.alpha)?;
    let d = train.dim();
    let (m, trace) = projected_descent(
        DMatrix::identity(d, d),
        DescentSettings {
            max_iter: opts.max_iter,
            tol: opts.tol,
        },
        |m| problem.objective(m),
        // The objective is finite at every accepted iterate, so M is PD here.
        |m| problem.gradient(m).unwrap_or_else(|_| DMatrix::zeros(d, d)),
        |m| {
            // Relative to the largest magnitude so a step that overshoots into the
            // negative cone still lands at a well-conditioned point.
            let top = numerics::symmetric_eigenvalues(&m).amax();
            let top = if top > 0.0 { top } else { 1.0 };
            numerics::psd_project_floored(&m, EIGEN_FLOOR * top)
        },
    );
    if !trace.converged {
        log::warn!("LSML stopped after {} iterations without converging", trace.iterations);
    }
    let metric = MahalanobisMetric::from_symmetrized(guard_degenerate(m), MetricForm::Full)?;
    Ok((metric, trace))
}
