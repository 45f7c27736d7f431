//! Large-margin nearest neighbor, treating each distinct rating as a class.
//!
//! `eps(M) = (1 - mu) sum_{i, j in T(i)} d2(i, j)
//!         + mu sum_{i, j in T(i), l: y_l != y_i} [1 + d2(i, j) - d2(i, l)]_+`

use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{guard_degenerate, pair_scatter, projected_descent, DescentSettings, OptimizerTrace};
use crate::error::{Error, Result};
use crate::numerics;
use crate::types::{LabeledDataset, MahalanobisMetric, MetricForm};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmnnOptions {
    pub k_targets: usize,
    /// Weight of the push (impostor) term.
    pub mu: f64,
    pub max_iter: usize,
    pub tol: f64,
    /// Fail on singleton classes instead of skipping them.
    pub strict: bool,
}

impl Default for LmnnOptions {
    fn default() -> Self {
        LmnnOptions {
            k_targets: 3,
            mu: 0.5,
            max_iter: 500,
            tol: 1e-6,
            strict: false,
        }
    }
}

/// Fixed target neighbors and impostor candidates for one training set.
#[derive(Debug, Clone)]
pub struct LmnnProblem {
    x: DMatrix<f64>,
    labels: Vec<i32>,
    /// `(i, j)`: `j` is a target neighbor of `i`.
    targets: Vec<(usize, usize)>,
    mu: f64,
}

impl LmnnProblem {
    pub fn new(train: &LabeledDataset, opts: &LmnnOptions) -> Result<Self> {
        if opts.k_targets == 0 {
            return Err(Error::Config("k_targets must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&opts.mu) {
            return Err(Error::Config(format!("mu must lie in [0, 1], got {}", opts.mu)));
        }
        let labels = train.labels().to_vec();
        let mut classes: BTreeMap<i32, Vec<usize>> = BTreeMap::new();
        for (i, &y) in labels.iter().enumerate() {
            classes.entry(y).or_default().push(i);
        }
        let mut targets = Vec::new();
        for (&y, members) in &classes {
            if members.len() < 2 {
                if opts.strict {
                    return Err(Error::Constraint(format!(
                        "rating class {y} has a single member; LMNN needs at least 2"
                    )));
                }
                log::warn!("LMNN: skipping singleton rating class {y}");
                continue;
            }
            if members.len() <= opts.k_targets {
                if opts.strict {
                    return Err(Error::Constraint(format!(
                        "rating class {y} has {} members, fewer than k_targets + 1 = {}",
                        members.len(),
                        opts.k_targets + 1
                    )));
                }
                log::warn!(
                    "LMNN: rating class {y} has {} members; using {} target neighbors",
                    members.len(),
                    members.len() - 1
                );
            }
            let k = opts.k_targets.min(members.len() - 1);
            for &i in members {
                let mut others: Vec<(f64, usize)> = members
                    .iter()
                    .filter(|&&j| j != i)
                    .map(|&j| {
                        let d2: f64 = train
                            .row(i)
                            .iter()
                            .zip(train.row(j))
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum();
                        (d2, j)
                    })
                    .collect();
                others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                targets.extend(others.iter().take(k).map(|&(_, j)| (i, j)));
            }
        }
        if targets.is_empty() {
            return Err(Error::Constraint(
                "LMNN found no target neighbors (every rating class is a singleton)".into(),
            ));
        }
        targets.sort_unstable();
        Ok(LmnnProblem {
            x: train.feature_matrix(),
            labels,
            targets,
            mu: opts.mu,
        })
    }

    pub fn targets(&self) -> &[(usize, usize)] {
        &self.targets
    }

    fn squared_distances(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.x.nrows();
        let xm = &self.x * m;
        let norms: Vec<f64> = (0..n).map(|i| xm.row(i).dot(&self.x.row(i))).collect();
        let gram = &xm * self.x.transpose();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                0.0
            } else {
                (norms[i] + norms[j] - gram[(i, j)] - gram[(j, i)]).max(0.0)
            }
        })
    }

    /// Visits `(i, j, l, hinge)` for every impostor triple with a positive hinge.
    fn active_impostors(&self, d2: &DMatrix<f64>, mut visit: impl FnMut(usize, usize, usize, f64)) {
        for &(i, j) in &self.targets {
            let yi = self.labels[i];
            for (l, &yl) in self.labels.iter().enumerate() {
                if yl == yi {
                    continue;
                }
                let h = 1.0 + d2[(i, j)] - d2[(i, l)];
                if h > 0.0 {
                    visit(i, j, l, h);
                }
            }
        }
    }

    pub fn pull(&self, m: &DMatrix<f64>) -> f64 {
        let d2 = self.squared_distances(m);
        self.targets.iter().map(|&(i, j)| d2[(i, j)]).sum()
    }

    pub fn push(&self, m: &DMatrix<f64>) -> f64 {
        let d2 = self.squared_distances(m);
        let mut total = 0.0;
        self.active_impostors(&d2, |_, _, _, h| total += h);
        total
    }

    pub fn objective(&self, m: &DMatrix<f64>) -> f64 {
        let d2 = self.squared_distances(m);
        let pull: f64 = self.targets.iter().map(|&(i, j)| d2[(i, j)]).sum();
        let mut push = 0.0;
        self.active_impostors(&d2, |_, _, _, h| push += h);
        (1.0 - self.mu) * pull + self.mu * push
    }

    pub fn gradient(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.x.nrows();
        let d2 = self.squared_distances(m);
        let mut w = DMatrix::zeros(n, n);
        for &(i, j) in &self.targets {
            w[(i, j)] += 1.0 - self.mu;
        }
        self.active_impostors(&d2, |i, j, l, _| {
            w[(i, j)] += self.mu;
            w[(i, l)] -= self.mu;
        });
        pair_scatter(&self.x, &w)
    }
}

/// Fits LMNN by projected gradient descent from the identity. Target
/// neighbors are chosen under the Euclidean metric and kept fixed.
pub fn fit_lmnn(train: &LabeledDataset, opts: &LmnnOptions) -> Result<(MahalanobisMetric, OptimizerTrace)> {
    let problem = LmnnProblem::new(train, opts)?;
    let d = train.dim();
    let (m, trace) = projected_descent(
        DMatrix::identity(d, d),
        DescentSettings {
            max_iter: opts.max_iter,
            tol: opts.tol,
        },
        |m| problem.objective(m),
        |m| problem.gradient(m),
        |m| numerics::psd_project_floored(&m, 0.0),
    );
    if !trace.converged {
        log::warn!("LMNN stopped after {} iterations without converging", trace.iterations);
    }
    let metric = MahalanobisMetric::from_symmetrized(guard_degenerate(m), MetricForm::Full)?;
    Ok((metric, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
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
    fn separated_clusters_have_no_active_impostors() {
        let ds = dataset(
            vec![
                vec![0.0, 0.0],
                vec![0.1, 0.0],
                vec![0.0, 0.1],
                vec![10.0, 10.0],
                vec![10.1, 10.0],
                vec![10.0, 10.1],
            ],
            vec![1, 1, 1, 5, 5, 5],
        );
        let opts = LmnnOptions {
            k_targets: 1,
            ..Default::default()
        };
        let (m, _) = fit_lmnn(&ds, &opts).unwrap();
        let problem = LmnnProblem::new(&ds, &opts).unwrap();
        assert_eq!(problem.push(m.matrix()), 0.0);
    }

    #[test]
    fn single_class_collapse_is_guarded() {
        let ds = dataset(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![2.0, 2.0]], vec![3, 3, 3]);
        let (m, _) = fit_lmnn(&ds, &LmnnOptions::default()).unwrap();
        assert!(m.matrix().trace() >= 1e-8);
    }

    #[test]
    fn singleton_classes() {
        let ds = dataset(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1, 1, 2]);
        let strict = LmnnOptions {
            strict: true,
            ..Default::default()
        };
        assert!(matches!(fit_lmnn(&ds, &strict), Err(Error::Constraint(_))));
        let problem = LmnnProblem::new(&ds, &LmnnOptions::default()).unwrap();
        assert_eq!(problem.targets(), &[(0, 1), (1, 0)]);
        let all_single = dataset(vec![vec![0.0], vec![1.0], vec![2.0]], vec![1, 2, 3]);
        assert!(fit_lmnn(&all_single, &LmnnOptions::default()).is_err());
    }

    #[test]
    fn target_ties_break_by_index() {
        let ds = dataset(vec![vec![0.0], vec![1.0], vec![-1.0]], vec![2, 2, 2]);
        let opts = LmnnOptions {
            k_targets: 1,
            ..Default::default()
        };
        let problem = LmnnProblem::new(&ds, &opts).unwrap();
        assert_eq!(problem.targets()[0], (0, 1));
    }
}
