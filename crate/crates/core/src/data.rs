//! CSV ingestion for the defendants table and survey judgments, label
//! attachment, and z-score standardization.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{LabeledDataset, RatingScale};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    /// `positive` encodes to 1, `negative` to 0.
    Binary {
        positive: String,
        negative: String,
    },
    /// One indicator column per category, in declaration order.
    Categorical {
        categories: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Raw defendant-table columns and how they are encoded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    #[serde(default = "default_id_column")]
    pub id_column: String,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    pub columns: Vec<ColumnSpec>,
}

fn default_id_column() -> String {
    "id".into()
}

fn default_label_column() -> String {
    "compas_decile".into()
}

impl FeatureSchema {
    /// Age, sex, juvenile felony and misdemeanor counts, prior convictions,
    /// charge degree and charge category. Race is appended only when asked for.
    pub fn default_compas(include_race: bool) -> Self {
        let numeric = |name: &str| ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Numeric,
        };
        let categorical = |name: &str, cats: &[&str]| ColumnSpec {
            name: name.into(),
            kind: ColumnKind::Categorical {
                categories: cats.iter().map(|s| s.to_string()).collect(),
            },
        };
        let mut columns = vec![
            numeric("age"),
            ColumnSpec {
                name: "sex".into(),
                kind: ColumnKind::Binary {
                    positive: "Female".into(),
                    negative: "Male".into(),
                },
            },
            numeric("juv_fel_count"),
            numeric("juv_misd_count"),
            numeric("priors_count"),
            ColumnSpec {
                name: "c_charge_degree".into(),
                kind: ColumnKind::Binary {
                    positive: "F".into(),
                    negative: "M".into(),
                },
            },
            categorical(
                "charge_category",
                &["violent", "property", "drug", "public_order", "traffic", "other"],
            ),
        ];
        if include_race {
            columns.push(categorical(
                "race",
                &[
                    "African-American",
                    "Asian",
                    "Caucasian",
                    "Hispanic",
                    "Native American",
                    "Other",
                ],
            ));
        }
        FeatureSchema {
            id_column: default_id_column(),
            label_column: default_label_column(),
            columns,
        }
    }

    pub fn from_manifest_str(text: &str) -> Result<Self> {
        let schema: FeatureSchema =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid schema manifest: {e}")))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_manifest(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_manifest_str(&text)
    }

    pub fn to_manifest(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::Config("schema declares no feature columns".into()));
        }
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(Error::Config(format!("schema repeats column '{}'", col.name)));
            }
            match &col.kind {
                ColumnKind::Categorical { categories } if categories.is_empty() => {
                    return Err(Error::Config(format!(
                        "categorical column '{}' lists no categories",
                        col.name
                    )));
                }
                ColumnKind::Binary { positive, negative } if positive == negative => {
                    return Err(Error::Config(format!(
                        "binary column '{}' uses the same value for both levels",
                        col.name
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Names of the encoded columns (`name=category` for indicators).
    pub fn encoded_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .flat_map(|c| match &c.kind {
                ColumnKind::Categorical { categories } => {
                    categories.iter().map(|cat| format!("{}={cat}", c.name)).collect()
                }
                _ => vec![c.name.clone()],
            })
            .collect()
    }

    pub fn encoded_dim(&self) -> usize {
        self.encoded_names().len()
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn header_index(headers: &csv::StringRecord, name: &str, file: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::ingest(file, 0, name, "column missing from header"))
}

/// Loads the defendants table, labelled by COMPAS decile score.
pub fn load_defendants(path: &Path, schema: &FeatureSchema) -> Result<LabeledDataset> {
    read_defendants(open(path)?, schema, &path.display().to_string())
}

pub fn read_defendants<R: Read>(reader: R, schema: &FeatureSchema, source: &str) -> Result<LabeledDataset> {
    schema.validate()?;
    let mut rdr = csv_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::ingest(source, 0, "", e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(Error::ingest(source, 0, "", "file is empty"));
    }
    let id_idx = header_index(&headers, &schema.id_column, source)?;
    let label_idx = header_index(&headers, &schema.label_column, source)?;
    let col_idx = schema
        .columns
        .iter()
        .map(|c| header_index(&headers, &c.name, source))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut seen_ids = HashSet::new();
    for (r, record) in rdr.records().enumerate() {
        let row_no = r + 1;
        let record = record.map_err(|e| Error::ingest(source, row_no, "", e.to_string()))?;
        let cell = |idx: usize, name: &str| -> Result<&str> {
            match record.get(idx) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::ingest(source, row_no, name, "missing value")),
            }
        };
        let id = cell(id_idx, &schema.id_column)?.to_string();
        if !seen_ids.insert(id.clone()) {
            return Err(Error::ingest(
                source,
                row_no,
                &schema.id_column,
                format!("duplicate id '{id}'"),
            ));
        }
        let raw_label = cell(label_idx, &schema.label_column)?;
        let label: i32 = raw_label.parse().map_err(|_| {
            Error::ingest(
                source,
                row_no,
                &schema.label_column,
                format!("cannot parse '{raw_label}' as an integer"),
            )
        })?;
        if !RatingScale::COMPAS.contains(label) {
            return Err(Error::ingest(
                source,
                row_no,
                &schema.label_column,
                format!("label {label} outside 1-10"),
            ));
        }
        let mut features = Vec::with_capacity(schema.encoded_dim());
        for (spec, &idx) in schema.columns.iter().zip(&col_idx) {
            let value = cell(idx, &spec.name)?;
            encode_cell(spec, value, &mut features).map_err(|msg| Error::ingest(source, row_no, &spec.name, msg))?;
        }
        rows.push(features);
        labels.push(label);
        ids.push(id);
    }
    if rows.is_empty() {
        return Err(Error::ingest(source, 0, "", "file has no data rows"));
    }
    LabeledDataset::from_rows_with_ids(rows, labels, ids, RatingScale::COMPAS, schema.encoded_names(), source)
        .map_err(|e| Error::ingest(source, 0, "", e.to_string()))
}

fn encode_cell(spec: &ColumnSpec, value: &str, out: &mut Vec<f64>) -> std::result::Result<(), String> {
    match &spec.kind {
        ColumnKind::Numeric => {
            let v: f64 = value
                .parse()
                .map_err(|_| format!("cannot parse '{value}' as a number"))?;
            if !v.is_finite() {
                return Err(format!("non-finite value '{value}'"));
            }
            out.push(v);
        }
        ColumnKind::Binary { positive, negative } => {
            if value == positive {
                out.push(1.0);
            } else if value == negative {
                out.push(0.0);
            } else {
                return Err(format!("value '{value}' is neither '{positive}' nor '{negative}'"));
            }
        }
        ColumnKind::Categorical { categories } => {
            let hit = categories
                .iter()
                .position(|c| c == value)
                .ok_or_else(|| format!("unseen category '{value}'"))?;
            out.extend((0..categories.len()).map(|i| if i == hit { 1.0 } else { 0.0 }));
        }
    }
    Ok(())
}

/// One respondent's answers for one defendant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurveyRecord {
    pub respondent_id: String,
    pub defendant_id: String,
    /// Q1, 1 (extremely unlikely) to 5 (extremely likely).
    pub recidivism_prediction: i32,
    /// Q2
    pub bail_granted: bool,
    /// Q3, 1 to 5.
    pub confidence: i32,
    pub ground_truth_recidivated: bool,
}

impl SurveyRecord {
    /// Granting bail is correct exactly when the defendant did not recidivate.
    pub fn is_correct(&self) -> bool {
        self.bail_granted != self.ground_truth_recidivated
    }
}

pub const SURVEY_COLUMNS: [&str; 6] = [
    "respondent_id",
    "defendant_id",
    "q1_recidivism",
    "q2_bail",
    "q3_confidence",
    "two_year_recid",
];

pub fn load_survey(path: &Path) -> Result<Vec<SurveyRecord>> {
    read_survey(open(path)?, &path.display().to_string())
}

pub fn read_survey<R: Read>(reader: R, source: &str) -> Result<Vec<SurveyRecord>> {
    let mut rdr = csv_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::ingest(source, 0, "", e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(Error::ingest(source, 0, "", "file is empty"));
    }
    let idx = SURVEY_COLUMNS
        .iter()
        .map(|c| header_index(&headers, c, source))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (r, record) in rdr.records().enumerate() {
        let row_no = r + 1;
        let record = record.map_err(|e| Error::ingest(source, row_no, "", e.to_string()))?;
        let cell = |k: usize| -> Result<&str> {
            match record.get(idx[k]) {
                Some(v) if !v.is_empty() => Ok(v),
                _ => Err(Error::ingest(source, row_no, SURVEY_COLUMNS[k], "missing value")),
            }
        };
        let likert = |k: usize| -> Result<i32> {
            let raw = cell(k)?;
            let v: i32 = raw
                .parse()
                .map_err(|_| Error::ingest(source, row_no, SURVEY_COLUMNS[k], format!("cannot parse '{raw}'")))?;
            if !RatingScale::SURVEY.contains(v) {
                return Err(Error::ingest(
                    source,
                    row_no,
                    SURVEY_COLUMNS[k],
                    format!("rating {v} outside 1-5"),
                ));
            }
            Ok(v)
        };
        let respondent_id = cell(0)?.to_string();
        let defendant_id = cell(1)?.to_string();
        let recidivism_prediction = likert(2)?;
        let bail_granted = match cell(3)?.to_ascii_lowercase().as_str() {
            "yes" => true,
            "no" => false,
            other => {
                return Err(Error::ingest(
                    source,
                    row_no,
                    SURVEY_COLUMNS[3],
                    format!("expected yes/no, got '{other}'"),
                ))
            }
        };
        let confidence = likert(4)?;
        let ground_truth_recidivated = match cell(5)? {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::ingest(
                    source,
                    row_no,
                    SURVEY_COLUMNS[5],
                    format!("expected 0/1, got '{other}'"),
                ))
            }
        };
        if !seen.insert((respondent_id.clone(), defendant_id.clone())) {
            return Err(Error::ingest(
                source,
                row_no,
                SURVEY_COLUMNS[1],
                format!("duplicate judgment for respondent '{respondent_id}', defendant '{defendant_id}'"),
            ));
        }
        records.push(SurveyRecord {
            respondent_id,
            defendant_id,
            recidivism_prediction,
            bail_granted,
            confidence,
            ground_truth_recidivated,
        });
    }
    if records.is_empty() {
        return Err(Error::ingest(source, 0, "", "file has no data rows"));
    }
    Ok(records)
}

/// Which survey ratings become the dataset labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelMode {
    PerRespondent(String),
    PooledMedian,
    PooledRoundedMean,
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pooled_median" => Ok(LabelMode::PooledMedian),
            "pooled_rounded_mean" => Ok(LabelMode::PooledRoundedMean),
            _ => match s.strip_prefix("per_respondent:") {
                Some(id) if !id.is_empty() => Ok(LabelMode::PerRespondent(id.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown label mode '{s}' (expected per_respondent:<id>, pooled_median or pooled_rounded_mean)"
                ))),
            },
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelMode::PerRespondent(id) => write!(f, "per_respondent:{id}"),
            LabelMode::PooledMedian => f.write_str("pooled_median"),
            LabelMode::PooledRoundedMean => f.write_str("pooled_rounded_mean"),
        }
    }
}

/// `round_half_up(sum / count)` in exact integer arithmetic.
fn rounded_mean(values: &[i32]) -> i32 {
    let sum: i64 = values.iter().map(|&v| i64::from(v)).sum();
    let n = values.len() as i64;
    (2 * sum + n).div_euclid(2 * n) as i32
}

/// Middle value; an even count takes the half-up rounded mean of the two middle values.
fn median(values: &[i32]) -> i32 {
    let mut v = values.to_vec();
    v.sort_unstable();
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        rounded_mean(&v[m - 1..=m])
    }
}

/// Replaces COMPAS labels by survey ratings on the surveyed defendants,
/// keeping the defendant order of `defendants`.
pub fn attach_labels(defendants: &LabeledDataset, survey: &[SurveyRecord], mode: &LabelMode) -> Result<LabeledDataset> {
    let known: HashSet<&str> = defendants.ids().iter().map(String::as_str).collect();
    if let Some(r) = survey.iter().find(|r| !known.contains(r.defendant_id.as_str())) {
        return Err(Error::Config(format!(
            "surveyed defendant '{}' is not in the defendants table",
            r.defendant_id
        )));
    }
    let mut ratings: HashMap<&str, Vec<i32>> = HashMap::new();
    match mode {
        LabelMode::PerRespondent(id) => {
            for r in survey.iter().filter(|r| &r.respondent_id == id) {
                ratings
                    .entry(r.defendant_id.as_str())
                    .or_default()
                    .push(r.recidivism_prediction);
            }
            if ratings.is_empty() {
                return Err(Error::Config(format!("unknown respondent id '{id}'")));
            }
        }
        LabelMode::PooledMedian | LabelMode::PooledRoundedMean => {
            for r in survey {
                ratings
                    .entry(r.defendant_id.as_str())
                    .or_default()
                    .push(r.recidivism_prediction);
            }
        }
    }
    let mut keep = Vec::new();
    let mut labels = Vec::new();
    for (i, id) in defendants.ids().iter().enumerate() {
        if let Some(values) = ratings.get(id.as_str()) {
            keep.push(i);
            labels.push(match mode {
                LabelMode::PooledRoundedMean => rounded_mean(values),
                _ => median(values),
            });
        }
    }
    defendants.subset(&keep)?.with_labels(labels, RatingScale::SURVEY)
}

/// Per-column location and scale used for z-scoring.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Sample mean and standard deviation (`n - 1`); zero-variance columns get scale 1.
    pub fn fit(dataset: &LabeledDataset) -> Self {
        let n = dataset.len() as f64;
        let d = dataset.dim();
        let mut mean = vec![0.0; d];
        for row in dataset.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in dataset.rows() {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .into_iter()
            .map(|s| {
                let sd = (s / (n - 1.0)).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, dataset: &LabeledDataset) -> Result<LabeledDataset> {
        if dataset.dim() != self.mean.len() {
            return Err(Error::Config(format!(
                "standardizer has dimension {}, dataset has {}",
                self.mean.len(),
                dataset.dim()
            )));
        }
        Ok(dataset.map_rows(|_, row| {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }))
    }
}

/// Z-scores `dataset` with `stats`, or with statistics fitted on it when `None`.
pub fn standardize(dataset: &LabeledDataset, stats: Option<&Standardizer>) -> Result<(LabeledDataset, Standardizer)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => Standardizer::fit(dataset),
    };
    Ok((stats.apply(dataset)?, stats))
}

/// Canonical CSV of an encoded dataset: `id`, encoded feature columns, `label`.
pub fn write_dataset_csv<W: std::io::Write>(dataset: &LabeledDataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
    let mut header = vec!["id".to_string()];
    header.extend(dataset.feature_names().iter().cloned());
    header.push("label".into());
    w.write_record(&header).map_err(to_err)?;
    for (i, row) in dataset.rows().enumerate() {
        let mut rec = vec![dataset.ids()[i].clone()];
        rec.extend(row.iter().map(|v| format!("{v:?}")));
        rec.push(dataset.label(i).to_string());
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
    Ok(())
}

pub fn write_survey_csv<W: std::io::Write>(records: &[SurveyRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Config(format!("csv write failed: {e}"));
    w.write_record(SURVEY_COLUMNS).map_err(to_err)?;
    for r in records {
        w.write_record([
            r.respondent_id.as_str(),
            r.defendant_id.as_str(),
            &r.recidivism_prediction.to_string(),
            if r.bail_granted { "yes" } else { "no" },
            &r.confidence.to_string(),
            if r.ground_truth_recidivated { "1" } else { "0" },
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::Config(format!("csv write failed: {e}")))?;
    Ok(())
}

/// Distinct respondent ids, numerically ordered when every id is an integer.
pub fn respondent_ids(records: &[SurveyRecord]) -> Vec<String> {
    let ids: BTreeSet<&str> = records.iter().map(|r| r.respondent_id.as_str()).collect();
    let mut ids: Vec<String> = ids.into_iter().map(str::to_string).collect();
    if ids.iter().all(|id| id.parse::<i64>().is_ok()) {
        ids.sort_by_key(|id| id.parse::<i64>().unwrap_or_default());
    }
    ids
}
