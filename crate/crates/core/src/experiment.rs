//! Repeated random train/test splits, learner fitting and loss aggregation.
//!
//! Every repeat draws its split from a ChaCha stream selected by the repeat
//! index, so all learners in a repeat see the same partition and a repeat's
//! result does not depend on which thread ran it.

use std::fmt::Write as _;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraints::{build_pairs, build_triplets_with, sample_triplets, DEFAULT_TRIPLET_SUBSAMPLE};
use crate::data::standardize;
use crate::error::{Error, Result};
use crate::evaluation::{knn_losses, triplet_violation_loss, LossKind};
use crate::exec::Exec;
use crate::learners::{
    euclidean_baseline, fit_lmnn, fit_lsml, fit_mmc, precision_baseline, LmnnOptions, LsmlOptions, MmcOptions,
};
use crate::types::{LabeledDataset, MahalanobisMetric, TripletVariant};

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train_size: usize,
    pub test_size: usize,
    pub n_repeats: usize,
    pub k_neighbors: usize,
    /// Triplet threshold on training labels (LSML entries without their own sigma).
    pub sigma_train: f64,
    /// Triplet threshold on test labels.
    pub sigma_test: f64,
    pub triplet_subsample: usize,
    pub triplet_variant: TripletVariant,
    pub rng_seed: u64,
    pub lsml: LsmlOptions,
    pub lmnn: LmnnOptions,
    pub mmc: MmcOptions,
    pub exec: Exec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train_size: 140,
            test_size: 60,
            n_repeats: 10,
            k_neighbors: 5,
            sigma_train: 0.0,
            sigma_test: 0.0,
            triplet_subsample: DEFAULT_TRIPLET_SUBSAMPLE,
            triplet_variant: TripletVariant::Literal,
            rng_seed: 0,
            lsml: LsmlOptions::default(),
            lmnn: LmnnOptions::default(),
            mmc: MmcOptions::default(),
            exec: Exec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.train_size == 0 || self.test_size == 0 || self.n_repeats == 0 || self.k_neighbors == 0 {
            return Err(Error::Config(
                "train_size, test_size, n_repeats and k_neighbors must be positive".into(),
            ));
        }
        if self.train_size + self.test_size > n {
            return Err(Error::Config(format!(
                "train_size + test_size = {} exceeds the {n} available instances",
                self.train_size + self.test_size
            )));
        }
        if self.k_neighbors > self.train_size {
            return Err(Error::Config("k_neighbors exceeds train_size".into()));
        }
        if !(self.lsml.alpha > 0.0) {
            return Err(Error::Config("alpha must be positive".into()));
        }
        if self.triplet_subsample == 0 {
            return Err(Error::Config("triplet_subsample must be positive".into()));
        }
        for s in [self.sigma_train, self.sigma_test] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!("sigma must be nonnegative, got {s}")));
            }
        }
        Ok(())
    }
}

/// One entry of the learner menu.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LearnerSpec {
    Euclidean,
    Precision,
    Lmnn,
    Mmc,
    /// LSML trained on triplets built with `sigma` (or the config's `sigma_train`).
    Lsml {
        sigma: Option<f64>,
    },
}

impl LearnerSpec {
    /// Both baselines and the three learners.
    pub fn full_menu() -> Vec<LearnerSpec> {
        vec![
            LearnerSpec::Euclidean,
            LearnerSpec::Precision,
            LearnerSpec::Lmnn,
            LearnerSpec::Mmc,
            LearnerSpec::Lsml { sigma: None },
        ]
    }

    /// Euclidean plus one LSML column per training sigma.
    pub fn sweep_menu(sigmas: &[f64]) -> Vec<LearnerSpec> {
        std::iter::once(LearnerSpec::Euclidean)
            .chain(sigmas.iter().map(|&s| LearnerSpec::Lsml { sigma: Some(s) }))
            .collect()
    }

    pub fn name(&self) -> String {
        match self {
            LearnerSpec::Euclidean => "euclidean".into(),
            LearnerSpec::Precision => "precision".into(),
            LearnerSpec::Lmnn => "lmnn".into(),
            LearnerSpec::Mmc => "mmc".into(),
            LearnerSpec::Lsml { sigma: None } => "lsml".into(),
            LearnerSpec::Lsml { sigma: Some(s) } => format!("lsml(sigma={s})"),
        }
    }

    fn fit(&self, config: &ExperimentConfig, train: &LabeledDataset, triplet_seed: u64) -> Result<MahalanobisMetric> {
        match *self {
            LearnerSpec::Euclidean => euclidean_baseline(train.dim()),
            LearnerSpec::Precision => precision_baseline(train).map(|(m, _)| m),
            LearnerSpec::Lmnn => fit_lmnn(train, &config.lmnn).map(|(m, _)| m),
            LearnerSpec::Mmc => fit_mmc(train, &build_pairs(train), &config.mmc).map(|(m, _)| m),
            LearnerSpec::Lsml { sigma } => {
                let triplets = sample_triplets(
                    Exec::Sequential,
                    train,
                    sigma.unwrap_or(config.sigma_train),
                    config.triplet_variant,
                    config.triplet_subsample,
                    triplet_seed,
                )?;
                fit_lsml(train, &triplets, &config.lsml).map(|(m, _)| m)
            }
        }
    }
}

/// Disjoint train/test indices for one repeat.
pub fn split_indices(
    n: usize,
    train_size: usize,
    test_size: usize,
    seed: u64,
    repeat: usize,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let (train, test, _) = draw_split(&mut repeat_rng(seed, repeat), n, train_size, test_size)?;
    Ok((train, test))
}

/// Split indices followed by a subsampling seed, all from the repeat's stream.
fn draw_split(
    rng: &mut ChaCha8Rng,
    n: usize,
    train_size: usize,
    test_size: usize,
) -> Result<(Vec<usize>, Vec<usize>, u64)> {
    if train_size + test_size > n {
        return Err(Error::Config(format!(
            "cannot draw {} instances from {n}",
            train_size + test_size
        )));
    }
    let picked = index::sample(rng, n, train_size + test_size).into_vec();
    let (train, test) = picked.split_at(train_size);
    Ok((train.to_vec(), test.to_vec(), rng.random()))
}

fn repeat_rng(seed: u64, repeat: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(repeat as u64);
    rng
}

/// Per-learner outcome inside one repeat.
#[derive(Debug, Clone)]
pub struct LearnerOutcome {
    pub name: String,
    pub metric: std::result::Result<MahalanobisMetric, String>,
    /// Triplet-violation loss per requested test sigma; `None` for an empty test set or failure.
    pub triplet: Vec<Option<f64>>,
    pub knn: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct RepeatOutcome {
    pub repeat: usize,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub learners: Vec<LearnerOutcome>,
}

/// Runs every repeat, scoring each learner's metric against each test sigma.
pub fn run_repeats(
    config: &ExperimentConfig,
    dataset: &LabeledDataset,
    menu: &[LearnerSpec],
    sigma_tests: &[f64],
) -> Result<Vec<RepeatOutcome>> {
    config.validate(dataset.len())?;
    if menu.is_empty() || sigma_tests.is_empty() {
        return Err(Error::Config(
            "learner menu and test sigma list must be nonempty".into(),
        ));
    }
    if let Some(s) = sigma_tests.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::Config(format!("test sigma must be nonnegative, got {s}")));
    }
    config
        .exec
        .map_range(config.n_repeats, |r| {
            run_one_repeat(config, dataset, menu, sigma_tests, r)
        })
        .into_iter()
        .collect()
}

fn run_one_repeat(
    config: &ExperimentConfig,
    dataset: &LabeledDataset,
    menu: &[LearnerSpec],
    sigma_tests: &[f64],
    repeat: usize,
) -> Result<RepeatOutcome> {
    let (train_idx, test_idx, triplet_seed) = draw_split(
        &mut repeat_rng(config.rng_seed, repeat),
        dataset.len(),
        config.train_size,
        config.test_size,
    )?;
    let (train, stats) = standardize(&dataset.subset(&train_idx)?, None)?;
    let (test, _) = standardize(&dataset.subset(&test_idx)?, Some(&stats))?;
    let test_triplets = sigma_tests
        .iter()
        .map(|&s| build_triplets_with(Exec::Sequential, &test, s, config.triplet_variant))
        .collect::<Result<Vec<_>>>()?;

    let learners = menu
        .iter()
        .map(|spec| {
            let name = spec.name();
            match spec.fit(config, &train, triplet_seed) {
                Ok(metric) => {
                    let triplet = test_triplets
                        .iter()
                        .map(|set| triplet_violation_loss(&metric, &test, set).ok())
                        .collect();
                    let knn = match knn_losses(Exec::Sequential, &metric, &train, &test, config.k_neighbors) {
                        Ok(v) => Some(v),
                        Err(e) => {
                            log::warn!("repeat {repeat}: kNN evaluation of {name} failed: {e}");
                            None
                        }
                    };
                    LearnerOutcome {
                        name,
                        metric: Ok(metric),
                        triplet,
                        knn,
                    }
                }
                Err(e) => {
                    log::warn!("repeat {repeat}: {name} failed: {e}");
                    LearnerOutcome {
                        name,
                        metric: Err(e.to_string()),
                        triplet: vec![None; sigma_tests.len()],
                        knn: None,
                    }
                }
            }
        })
        .collect();
    Ok(RepeatOutcome {
        repeat,
        train_indices: train_idx,
        test_indices: test_idx,
        learners,
    })
}

/// Mean and sample standard deviation (`n - 1`; zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Summary {
    /// `None` when no values are present. Values are reduced in the given order.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Summary { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportCell {
    pub metric: String,
    pub loss: LossKind,
    pub summary: Option<Summary>,
}

/// Per-(metric, loss) aggregates across repeats.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub cells: Vec<ReportCell>,
    pub n_repeats: usize,
}

impl EvalReport {
    pub fn get(&self, metric: &str, loss: LossKind) -> Option<Summary> {
        self.cells
            .iter()
            .find(|c| c.metric == metric && c.loss == loss)
            .and_then(|c| c.summary)
    }

    pub fn metrics(&self) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for c in &self.cells {
            if !names.contains(&c.metric) {
                names.push(c.metric.clone());
            }
        }
        names
    }

    /// `metric,loss,mean,std,n`; missing cells print `NA`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,loss,mean,std,n\n");
        for c in &self.cells {
            match c.summary {
                Some(s) => writeln!(out, "{},{},{:?},{:?},{}", c.metric, c.loss.name(), s.mean, s.std, s.n),
                None => writeln!(out, "{},{},NA,NA,0", c.metric, c.loss.name()),
            }
            .expect("writing to a String");
        }
        out
    }

    /// Metrics as rows, losses as columns, `mean ± std`.
    pub fn to_text_grid(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = LossKind::ALL.iter().map(|l| format!("{:>18}", l.name())).collect();
        writeln!(out, "{:<18}{}", "metric", header.join("")).unwrap();
        for name in self.metrics() {
            let row: Vec<String> = LossKind::ALL
                .iter()
                .map(|&l| format!("{:>18}", fmt_summary(self.get(&name, l))))
                .collect();
            writeln!(out, "{:<18}{}", name, row.join("")).unwrap();
        }
        writeln!(
            out,
            "(± is the sample standard deviation over {} repeats)",
            self.n_repeats
        )
        .unwrap();
        out
    }
}

fn fmt_summary(s: Option<Summary>) -> String {
    match s {
        Some(s) => format!("{:.3}±{:.3}", s.mean, s.std),
        None => "N/A".into(),
    }
}

/// Aggregates repeat outcomes; `sigma_index` selects which test sigma feeds the triplet loss.
pub fn aggregate(outcomes: &[RepeatOutcome], menu_names: &[String], sigma_index: usize) -> EvalReport {
    let mut cells = Vec::new();
    for (li, name) in menu_names.iter().enumerate() {
        for loss in LossKind::ALL {
            let values: Vec<f64> = outcomes
                .iter()
                .filter_map(|o| {
                    let l = &o.learners[li];
                    match loss {
                        LossKind::TripletViolation => l.triplet[sigma_index],
                        LossKind::KnnL1 => l.knn.map(|k| k.0),
                        LossKind::KnnL2 => l.knn.map(|k| k.1),
                    }
                })
                .collect();
            cells.push(ReportCell {
                metric: name.clone(),
                loss,
                summary: Summary::of(&values),
            });
        }
    }
    EvalReport {
        cells,
        n_repeats: outcomes.len(),
    }
}

/// Fits each learner on each repeat's training split and scores it on the test split.
pub fn run_experiment(config: &ExperimentConfig, dataset: &LabeledDataset, menu: &[LearnerSpec]) -> Result<EvalReport> {
    let outcomes = run_repeats(config, dataset, menu, &[config.sigma_test])?;
    let names: Vec<String> = menu.iter().map(LearnerSpec::name).collect();
    Ok(aggregate(&outcomes, &names, 0))
}

/// Triplet-violation loss for every (test sigma, learner) pair on shared splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub sigma_tests: Vec<f64>,
    pub columns: Vec<String>,
    /// `cells[row][col]`, rows indexed by test sigma.
    pub cells: Vec<Vec<Option<Summary>>>,
    pub n_repeats: usize,
}

impl SweepTable {
    pub fn cell(&self, sigma_test: f64, column: &str) -> Option<Summary> {
        let r = self.sigma_tests.iter().position(|&s| s == sigma_test)?;
        let c = self.columns.iter().position(|n| n == column)?;
        self.cells[r][c]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma_test,metric,loss,mean,std,n\n");
        for (r, s) in self.sigma_tests.iter().enumerate() {
            for (c, name) in self.columns.iter().enumerate() {
                match self.cells[r][c] {
                    Some(x) => writeln!(out, "{s},{name},triplet,{:?},{:?},{}", x.mean, x.std, x.n),
                    None => writeln!(out, "{s},{name},triplet,NA,NA,0"),
                }
                .expect("writing to a String");
            }
        }
        out
    }

    /// Test sigma as rows, metrics as columns.
    pub fn to_text_grid(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.columns.iter().map(|c| format!("{c:>18}")).collect();
        writeln!(out, "{:<10}{}", "sigma_t", header.join("")).unwrap();
        for (r, s) in self.sigma_tests.iter().enumerate() {
            let row: Vec<String> = self.cells[r]
                .iter()
                .map(|c| format!("{:>18}", fmt_summary(*c)))
                .collect();
            writeln!(out, "{:<10}{}", s, row.join("")).unwrap();
        }
        writeln!(
            out,
            "(triplet-violation loss; ± is the sample standard deviation over {} repeats)",
            self.n_repeats
        )
        .unwrap();
        out
    }
}

/// Cross product of training and test sigmas, Euclidean column first.
pub fn sigma_sweep(
    config: &ExperimentConfig,
    dataset: &LabeledDataset,
    sigma_train_list: &[f64],
    sigma_test_list: &[f64],
) -> Result<(SweepTable, Vec<RepeatOutcome>)> {
    if sigma_train_list.is_empty() || sigma_test_list.is_empty() {
        return Err(Error::Config("sigma lists must be nonempty".into()));
    }
    let menu = LearnerSpec::sweep_menu(sigma_train_list);
    let outcomes = run_repeats(config, dataset, &menu, sigma_test_list)?;
    let columns: Vec<String> = menu.iter().map(LearnerSpec::name).collect();
    let cells = (0..sigma_test_list.len())
        .map(|r| {
            (0..menu.len())
                .map(|c| {
                    let values: Vec<f64> = outcomes.iter().filter_map(|o| o.learners[c].triplet[r]).collect();
                    Summary::of(&values)
                })
                .collect()
        })
        .collect();
    Ok((
        SweepTable {
            sigma_tests: sigma_test_list.to_vec(),
            columns,
            cells,
            n_repeats: outcomes.len(),
        },
        outcomes,
    ))
}
