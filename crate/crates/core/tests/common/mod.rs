//! Brute-force reference implementations shared by the integration tests.
//! Written from the definitions, without calling into the library.

#![allow(dead_code, clippy::type_complexity)]

use nalgebra::DMatrix;

pub fn quad(m: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    let d = x.len();
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += (x[i] - y[i]) * m[(i, j)] * (x[j] - y[j]);
        }
    }
    s.max(0.0)
}

pub fn dist(m: &DMatrix<f64>, x: &[f64], y: &[f64]) -> f64 {
    quad(m, x, y).sqrt()
}

pub fn triplets(labels: &[i32], sigma: f64, symmetric: bool) -> Vec<(usize, usize, usize)> {
    let n = labels.len();
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if a == b || b == c || a == c {
                    continue;
                }
                let (sa, sb, sc) = (labels[a] as f64, labels[b] as f64, labels[c] as f64);
                let keep = if symmetric {
                    (sa - sb).abs() + sigma < (sa - sc).abs()
                } else {
                    sa <= sb + sigma && sb + sigma < sc
                };
                if keep {
                    out.push((a, b, c));
                }
            }
        }
    }
    out
}

pub fn pairs(labels: &[i32]) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
    let (mut same, mut other) = (Vec::new(), Vec::new());
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                same.push((i, j));
            } else {
                other.push((i, j));
            }
        }
    }
    (same, other)
}

/// Sort all training points by (distance, index), take k.
pub fn knn(m: &DMatrix<f64>, train: &[Vec<f64>], labels: &[i32], x: &[f64], k: usize) -> f64 {
    let mut order: Vec<(f64, usize)> = train.iter().enumerate().map(|(i, t)| (dist(m, x, t), i)).collect();
    order.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap().then(p.1.cmp(&q.1)));
    let near = &order[..k];
    let zeros: Vec<f64> = near
        .iter()
        .filter(|p| p.0 < 1e-12)
        .map(|p| labels[p.1] as f64)
        .collect();
    if !zeros.is_empty() {
        return zeros.iter().sum::<f64>() / zeros.len() as f64;
    }
    let wsum: f64 = near.iter().map(|p| 1.0 / p.0).sum();
    near.iter().map(|p| labels[p.1] as f64 / p.0).sum::<f64>() / wsum
}

pub fn violation_rate(m: &DMatrix<f64>, points: &[Vec<f64>], trips: &[(usize, usize, usize)]) -> f64 {
    let bad = trips
        .iter()
        .filter(|&&(a, b, c)| dist(m, &points[a], &points[b]) > dist(m, &points[a], &points[c]))
        .count();
    bad as f64 / trips.len() as f64
}

/// Z-scores `rows` with the mean and n-1 standard deviation of `fit_rows`.
pub fn zscore(fit_rows: &[Vec<f64>], rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = fit_rows.len() as f64;
    let d = fit_rows[0].len();
    let mean: Vec<f64> = (0..d).map(|k| fit_rows.iter().map(|r| r[k]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..d)
        .map(|k| {
            let v = fit_rows.iter().map(|r| (r[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0);
            if v.sqrt() > 1e-12 {
                v.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    rows.iter()
        .map(|r| (0..d).map(|k| (r[k] - mean[k]) / sd[k]).collect())
        .collect()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    nalgebra::SymmetricEigen::new(m.clone()).eigenvalues.min()
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).abs().max()
}
