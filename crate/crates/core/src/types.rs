//! Domain types shared across the crate: datasets, metrics and constraint sets.

use std::fmt;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::numerics;

/// Maximum absolute asymmetry tolerated in a metric matrix.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// Most negative eigenvalue (relative to `max(1, λ_max)`) tolerated in a metric matrix.
pub const PSD_TOL: f64 = 1e-8;

/// Inclusive integer rating range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingScale {
    pub min: i32,
    pub max: i32,
}

impl RatingScale {
    /// Likert scale used by the survey questions.
    pub const SURVEY: RatingScale = RatingScale { min: 1, max: 5 };
    /// COMPAS decile scores.
    pub const COMPAS: RatingScale = RatingScale { min: 1, max: 10 };

    pub fn new(min: i32, max: i32) -> Result<Self> {
        if min >= max {
            return Err(Error::Config(format!(
                "rating scale requires min < max, got [{min}, {max}]"
            )));
        }
        Ok(RatingScale { min, max })
    }

    pub fn contains(&self, rating: i32) -> bool {
        (self.min..=self.max).contains(&rating)
    }

    pub fn span(&self) -> i32 {
        self.max - self.min
    }
}

/// Dense vector of (usually standardized) features for one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("feature vector entry {pos} is not finite")));
        }
        Ok(FeatureVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Feature matrix plus one integer rating per row.
///
/// Features are stored row-major so that `row(i)` is a contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    n: usize,
    d: usize,
    features: Vec<f64>,
    labels: Vec<i32>,
    scale: RatingScale,
    ids: Vec<String>,
    feature_names: Vec<String>,
    source_tag: String,
}

impl LabeledDataset {
    /// Builds a dataset from row vectors. Instance ids default to the row index.
    pub fn from_rows(
        rows: Vec<Vec<f64>>,
        labels: Vec<i32>,
        scale: RatingScale,
        feature_names: Vec<String>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let ids = (0..rows.len()).map(|i| i.to_string()).collect();
        Self::from_rows_with_ids(rows, labels, ids, scale, feature_names, source_tag)
    }

    pub fn from_rows_with_ids(
        rows: Vec<Vec<f64>>,
        labels: Vec<i32>,
        ids: Vec<String>,
        scale: RatingScale,
        feature_names: Vec<String>,
        source_tag: impl Into<String>,
    ) -> Result<Self> {
        let n = rows.len();
        let d = feature_names.len();
        if n < 2 {
            return Err(Error::Config(format!("dataset needs at least 2 rows, got {n}")));
        }
        if d == 0 {
            return Err(Error::Config("dataset needs at least one feature".into()));
        }
        if labels.len() != n || ids.len() != n {
            return Err(Error::Config(format!(
                "dataset has {n} rows but {} labels and {} ids",
                labels.len(),
                ids.len()
            )));
        }
        let mut features = Vec::with_capacity(n * d);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != d {
                return Err(Error::Config(format!(
                    "row {i} has {} features, expected {d}",
                    row.len()
                )));
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Config(format!("row {i} has a non-finite feature")));
            }
            features.extend(row);
        }
        if let Some((i, l)) = labels.iter().enumerate().find(|(_, l)| !scale.contains(**l)) {
            return Err(Error::Config(format!(
                "label {l} at row {i} outside scale [{}, {}]",
                scale.min, scale.max
            )));
        }
        Ok(LabeledDataset {
            n,
            d,
            features,
            labels,
            scale,
            ids,
            feature_names,
            source_tag: source_tag.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.d)
    }

    pub fn labels(&self) -> &[i32] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> i32 {
        self.labels[i]
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    /// n×d feature matrix.
    pub fn feature_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.d, &self.features)
    }

    /// New dataset made of the given rows, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices.iter().map(|&i| self.row(i).to_vec()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        Self::from_rows_with_ids(
            rows,
            labels,
            ids,
            self.scale,
            self.feature_names.clone(),
            self.source_tag.clone(),
        )
    }

    /// Same rows and metadata with the labels replaced.
    pub fn with_labels(&self, labels: Vec<i32>, scale: RatingScale) -> Result<Self> {
        let rows = self.rows().map(<[f64]>::to_vec).collect();
        Self::from_rows_with_ids(
            rows,
            labels,
            self.ids.clone(),
            scale,
            self.feature_names.clone(),
            self.source_tag.clone(),
        )
    }

    /// Same labels and metadata with each row transformed in place.
    pub(crate) fn map_rows(&self, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        let mut out = self.clone();
        for (j, chunk) in out.features.chunks_exact_mut(self.d).enumerate() {
            f(j, chunk);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricForm {
    Full,
    Diagonal,
}

/// Symmetric PSD matrix `M` defining `d_M(x, y) = sqrt((x-y)^T M (x-y))`.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisMetric {
    matrix: DMatrix<f64>,
    form: MetricForm,
}

impl MahalanobisMetric {
    /// Validates symmetry and positive semidefiniteness.
    pub fn new(matrix: DMatrix<f64>, form: MetricForm) -> Result<Self> {
        if !matrix.is_square() || matrix.nrows() == 0 {
            return Err(Error::Config(format!(
                "metric matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invariant("metric matrix has non-finite entries".into()));
        }
        let asym = numerics::max_asymmetry(&matrix);
        if asym > SYMMETRY_TOL {
            return Err(Error::Invariant(format!(
                "metric matrix asymmetry {asym:e} exceeds {SYMMETRY_TOL:e}"
            )));
        }
        if form == MetricForm::Diagonal {
            let off_diag = (0..matrix.nrows())
                .flat_map(|i| (0..matrix.ncols()).map(move |j| (i, j)))
                .any(|(i, j)| i != j && matrix[(i, j)] != 0.0);
            if off_diag {
                return Err(Error::Invariant("diagonal metric has off-diagonal entries".into()));
            }
        }
        let eig = numerics::symmetric_eigenvalues(&matrix);
        let lmin = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let lmax = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if lmin < -PSD_TOL * lmax.max(1.0) {
            return Err(Error::Invariant(format!(
                "metric matrix is not PSD: smallest eigenvalue {lmin:e}"
            )));
        }
        Ok(MahalanobisMetric { matrix, form })
    }

    /// Symmetrizes `(A + A^T) / 2` before validating.
    pub fn from_symmetrized(matrix: DMatrix<f64>, form: MetricForm) -> Result<Self> {
        Self::new(numerics::symmetrize(&matrix), form)
    }

    pub fn identity(d: usize) -> Self {
        MahalanobisMetric {
            matrix: DMatrix::identity(d, d),
            form: MetricForm::Full,
        }
    }

    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| **w < 0.0 || !w.is_finite()) {
            return Err(Error::Invariant(format!(
                "diagonal weight {w} is negative or not finite"
            )));
        }
        Self::new(
            DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(weights)),
            MetricForm::Diagonal,
        )
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn form(&self) -> MetricForm {
        self.form
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `t * M` for `t > 0`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Config(format!("metric scale must be positive, got {t}")));
        }
        Ok(MahalanobisMetric {
            matrix: &self.matrix * t,
            form: self.form,
        })
    }

    /// `u^T M u` for a difference vector, clamped at zero within floating-point slack.
    pub fn quad_form(&self, u: &[f64]) -> Result<f64> {
        let d = self.dim();
        if u.len() != d {
            return Err(Error::Config(format!(
                "vector of length {} does not match metric dimension {d}",
                u.len()
            )));
        }
        let mut q = 0.0;
        let mut magnitude = 0.0;
        for j in 0..d {
            let col = self.matrix.column(j);
            let mut s = 0.0;
            let mut s_abs = 0.0;
            for i in 0..d {
                let t = col[i] * u[i];
                s += t;
                s_abs += t.abs();
            }
            q += s * u[j];
            magnitude += s_abs * u[j].abs();
        }
        if q < 0.0 {
            if q < -PSD_TOL * magnitude.max(1.0) {
                return Err(Error::Invariant(format!(
                    "quadratic form evaluated to {q:e}; metric is not PSD"
                )));
            }
            q = 0.0;
        }
        Ok(q)
    }

    pub fn squared_distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(Error::Config(format!(
                "vectors of length {} and {} cannot be compared",
                x.len(),
                y.len()
            )));
        }
        let u: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.quad_form(&u)
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.squared_distance(x, y).map(f64::sqrt)
    }

    /// Serializes as `d` followed by `d` rows of shortest round-trip decimals.
    pub fn to_text(&self) -> String {
        let d = self.dim();
        let mut out = format!("{d}\n");
        for i in 0..d {
            let row: Vec<String> = (0..d).map(|j| format!("{:?}", self.matrix[(i, j)])).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }

    /// Parses [`to_text`](Self::to_text) output. A matrix with zero off-diagonals is tagged diagonal.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let d: usize = lines
            .next()
            .ok_or_else(|| Error::Config("empty metric file".into()))?
            .trim()
            .parse()
            .map_err(|e| Error::Config(format!("bad metric dimension: {e}")))?;
        let mut values = Vec::with_capacity(d * d);
        for i in 0..d {
            let line = lines
                .next()
                .ok_or_else(|| Error::Config(format!("metric file missing row {i}")))?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Config(format!("bad metric entry in row {i}: {e}")))?;
            if row.len() != d {
                return Err(Error::Config(format!(
                    "metric row {i} has {} entries, expected {d}",
                    row.len()
                )));
            }
            values.extend(row);
        }
        let matrix = DMatrix::from_row_slice(d, d, &values);
        let diagonal = (0..d).all(|i| (0..d).all(|j| i == j || matrix[(i, j)] == 0.0));
        let form = if diagonal {
            MetricForm::Diagonal
        } else {
            MetricForm::Full
        };
        Self::new(matrix, form)
    }
}

/// Relative comparison: `a` is closer to `b` than to `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triplet {
    pub a: usize,
    pub b: usize,
    pub c: usize,
}

impl Triplet {
    pub fn new(a: usize, b: usize, c: usize) -> Self {
        Triplet { a, b, c }
    }
}

impl fmt::Display for Triplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.a, self.b, self.c)
    }
}

/// Which reading of the thresholded triplet rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TripletVariant {
    /// `S_a <= S_b + sigma < S_c`
    Literal,
    /// `|S_a - S_b| + sigma < |S_a - S_c|`
    Symmetric,
}

impl TripletVariant {
    pub fn accepts(self, sa: i32, sb: i32, sc: i32, sigma: f64) -> bool {
        let (sa, sb, sc) = (f64::from(sa), f64::from(sb), f64::from(sc));
        match self {
            TripletVariant::Literal => sa <= sb + sigma && sb + sigma < sc,
            TripletVariant::Symmetric => (sa - sb).abs() + sigma < (sa - sc).abs(),
        }
    }
}

impl fmt::Display for TripletVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripletVariant::Literal => "literal",
            TripletVariant::Symmetric => "symmetric",
        })
    }
}

impl std::str::FromStr for TripletVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "literal" => Ok(TripletVariant::Literal),
            "symmetric" => Ok(TripletVariant::Symmetric),
            other => Err(Error::Config(format!("unknown triplet variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletSet {
    pub triplets: Vec<Triplet>,
    pub sigma: f64,
    pub variant: TripletVariant,
}

impl TripletSet {
    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Re-checks the construction predicate on every triplet.
    pub fn verify(&self, labels: &[i32]) -> bool {
        self.triplets.iter().all(|t| {
            t.a != t.b
                && t.a != t.c
                && t.b != t.c
                && t.a.max(t.b).max(t.c) < labels.len()
                && self.variant.accepts(labels[t.a], labels[t.b], labels[t.c], self.sigma)
        })
    }
}

/// Similar (equal-rating) and dissimilar (unequal-rating) unordered index pairs, `i < j`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairSets {
    pub similar: Vec<(usize, usize)>,
    pub dissimilar: Vec<(usize, usize)>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn identity_distance_is_euclidean() {
        let m = MahalanobisMetric::identity(2);
        assert_eq!(m.distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
        assert_eq!(m.squared_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 25.0);
    }

    #[test]
    fn same_point_has_zero_distance() {
        let m = MahalanobisMetric::new(dmatrix![2.0, 0.5; 0.5, 1.0], MetricForm::Full).unwrap();
        assert_eq!(m.distance(&[1.5, -2.0], &[1.5, -2.0]).unwrap(), 0.0);
    }

    #[test]
    fn weighted_diagonal_distance() {
        let m = MahalanobisMetric::diagonal(&[4.0, 1.0]).unwrap();
        assert_eq!(m.squared_distance(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 5.0);
        assert!((m.distance(&[0.0, 0.0], &[1.0, 1.0]).unwrap() - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let m = MahalanobisMetric::identity(2);
        assert!(matches!(m.distance(&[0.0], &[1.0]), Err(Error::Config(_))));
        assert!(matches!(m.distance(&[0.0, 1.0], &[1.0]), Err(Error::Config(_))));
    }

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        assert!(MahalanobisMetric::new(dmatrix![1.0, 0.1; 0.0, 1.0], MetricForm::Full).is_err());
        assert!(MahalanobisMetric::new(dmatrix![1.0, 0.0; 0.0, -1.0], MetricForm::Full).is_err());
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = MahalanobisMetric::new(dmatrix![1.0 / 3.0, 0.1; 0.1, std::f64::consts::PI], MetricForm::Full).unwrap();
        let back = MahalanobisMetric::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn scale_requires_min_below_max() {
        assert!(RatingScale::new(5, 5).is_err());
        assert!(RatingScale::SURVEY.contains(5) && !RatingScale::SURVEY.contains(6));
    }

    #[test]
    fn dataset_rejects_out_of_scale_labels() {
        let err = LabeledDataset::from_rows(
            vec![vec![0.0], vec![1.0]],
            vec![1, 6],
            RatingScale::SURVEY,
            vec!["x".into()],
            "t",
        );
        assert!(err.is_err());
    }
}
