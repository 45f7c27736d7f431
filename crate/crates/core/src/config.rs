//! Experiment configuration file (TOML key-value sections).
//!
//! ```toml
//! mode = "compare"            # or "sweep"
//! seed = 7
//!
//! [data]
//! defendants = "defendants.csv"
//! survey = "survey.csv"       # required when labels = "survey"
//! schema = "schema.toml"      # optional; default schema otherwise
//! include_race = false
//! labels = "survey"           # or "compas"
//! label_mode = "pooled_median"
//!
//! [split]
//! train_size = 140
//! test_size = 60
//! n_repeats = 10
//!
//! [constraints]
//! variant = "literal"
//! sigma_train = 0.0
//! sigma_test = 0.0
//! triplet_subsample = 5000
//! sigma_train_list = [0.0, 2.0]
//! sigma_test_list = [0.0, 2.0, 4.0, 6.0]
//!
//! [evaluation]
//! k_neighbors = 5
//!
//! [lsml]
//! alpha = 0.01
//!
//! [lmnn]
//! k_targets = 3
//! mu = 0.5
//!
//! [mmc]
//! form = "full"
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::data::LabelMode;
use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::learners::{LmnnOptions, LsmlOptions, MmcOptions};
use crate::types::{MetricForm, TripletVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// All learners and baselines, all three losses.
    Compare,
    /// Euclidean against LSML over training and test sigmas.
    Sweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Compas,
    Survey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataPaths {
    pub defendants: PathBuf,
    pub survey: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub include_race: bool,
    pub labels: LabelSource,
    pub label_mode: LabelMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub data: DataPaths,
    pub experiment: ExperimentConfig,
    pub sigma_train_list: Vec<f64>,
    pub sigma_test_list: Vec<f64>,
    pub out_dir: PathBuf,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Mode,
    #[serde(default)]
    seed: u64,
    data: RawData,
    #[serde(default)]
    split: RawSplit,
    #[serde(default)]
    constraints: RawConstraints,
    #[serde(default)]
    evaluation: RawEvaluation,
    #[serde(default)]
    lsml: RawLsml,
    #[serde(default)]
    lmnn: RawLmnn,
    #[serde(default)]
    mmc: RawMmc,
    #[serde(default)]
    output: RawOutput,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    defendants: PathBuf,
    survey: Option<PathBuf>,
    schema: Option<PathBuf>,
    #[serde(default)]
    include_race: bool,
    labels: Option<LabelSource>,
    label_mode: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSplit {
    train_size: Option<usize>,
    test_size: Option<usize>,
    n_repeats: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConstraints {
    variant: Option<TripletVariant>,
    sigma_train: Option<f64>,
    sigma_test: Option<f64>,
    triplet_subsample: Option<usize>,
    sigma_train_list: Option<Vec<f64>>,
    sigma_test_list: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvaluation {
    k_neighbors: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLsml {
    alpha: Option<f64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLmnn {
    k_targets: Option<usize>,
    mu: Option<f64>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    strict: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMmc {
    form: Option<String>,
    max_iter: Option<usize>,
    tol: Option<f64>,
    max_projections: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(format!("invalid config: {e}")))?;
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };

        let labels = raw.data.labels.unwrap_or(match raw.mode {
            Mode::Compare => LabelSource::Survey,
            Mode::Sweep => LabelSource::Compas,
        });
        if labels == LabelSource::Survey && raw.data.survey.is_none() {
            return Err(Error::Config("labels = \"survey\" requires data.survey".into()));
        }
        let label_mode = raw.data.label_mode.as_deref().unwrap_or("pooled_median").parse()?;

        let lsml_default = LsmlOptions::default();
        let lmnn_default = LmnnOptions::default();
        let mmc_default = MmcOptions::default();
        let form = match raw.mmc.form.as_deref() {
            None | Some("full") => MetricForm::Full,
            Some("diagonal") => MetricForm::Diagonal,
            Some(other) => return Err(Error::Config(format!("unknown MMC form '{other}'"))),
        };
        let defaults = ExperimentConfig::default();
        let experiment = ExperimentConfig {
            train_size: raw.split.train_size.unwrap_or(defaults.train_size),
            test_size: raw.split.test_size.unwrap_or(defaults.test_size),
            n_repeats: raw.split.n_repeats.unwrap_or(defaults.n_repeats),
            k_neighbors: raw.evaluation.k_neighbors.unwrap_or(defaults.k_neighbors),
            sigma_train: raw.constraints.sigma_train.unwrap_or(defaults.sigma_train),
            sigma_test: raw.constraints.sigma_test.unwrap_or(defaults.sigma_test),
            triplet_subsample: raw.constraints.triplet_subsample.unwrap_or(defaults.triplet_subsample),
            triplet_variant: raw.constraints.variant.unwrap_or(defaults.triplet_variant),
            rng_seed: raw.seed,
            lsml: LsmlOptions {
                alpha: raw.lsml.alpha.unwrap_or(lsml_default.alpha),
                max_iter: raw.lsml.max_iter.unwrap_or(lsml_default.max_iter),
                tol: raw.lsml.tol.unwrap_or(lsml_default.tol),
            },
            lmnn: LmnnOptions {
                k_targets: raw.lmnn.k_targets.unwrap_or(lmnn_default.k_targets),
                mu: raw.lmnn.mu.unwrap_or(lmnn_default.mu),
                max_iter: raw.lmnn.max_iter.unwrap_or(lmnn_default.max_iter),
                tol: raw.lmnn.tol.unwrap_or(lmnn_default.tol),
                strict: raw.lmnn.strict.unwrap_or(lmnn_default.strict),
            },
            mmc: MmcOptions {
                form,
                max_iter: raw.mmc.max_iter.unwrap_or(mmc_default.max_iter),
                tol: raw.mmc.tol.unwrap_or(mmc_default.tol),
                max_projections: raw.mmc.max_projections.unwrap_or(mmc_default.max_projections),
            },
            exec: defaults.exec,
        };
        let sigma_train_list = raw.constraints.sigma_train_list.unwrap_or_else(|| vec![0.0, 2.0]);
        let sigma_test_list = raw
            .constraints
            .sigma_test_list
            .unwrap_or_else(|| vec![0.0, 2.0, 4.0, 6.0]);

        Ok(RunConfig {
            mode: raw.mode,
            data: DataPaths {
                defendants: resolve(raw.data.defendants),
                survey: raw.data.survey.map(resolve),
                schema: raw.data.schema.map(resolve),
                include_race: raw.data.include_race,
                labels,
                label_mode,
            },
            experiment,
            sigma_train_list,
            sigma_test_list,
            out_dir: resolve(raw.output.dir.unwrap_or_else(|| PathBuf::from("out"))),
        })
    }
}
