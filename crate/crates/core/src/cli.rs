//! Batch command line: ingestion, experiments, survey tables, triplet dumps.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::config::{LabelSource, Mode, RunConfig};
use crate::constraints::{build_triplets, subsample_triplets, write_triplets_csv};
use crate::data::{
    attach_labels, load_defendants, load_survey, respondent_ids, write_dataset_csv, write_survey_csv, FeatureSchema,
    LabelMode,
};
use crate::error::{Error, Result};
use crate::experiment::{aggregate, run_repeats, sigma_sweep, LearnerSpec, RepeatOutcome};
use crate::survey::{bail_rate_table, confidence_accuracy_table, DEFAULT_HIGH_CONFIDENCE};
use crate::types::{LabeledDataset, TripletVariant};

#[derive(Debug, Parser)]
#[command(
    name = "fairmetric",
    version,
    about = "Learn Mahalanobis metrics from absolute ratings"
)]
pub struct Cli {
    /// Worker threads for parallel repeats (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate input files and write canonical copies plus a summary.
    Ingest {
        #[arg(long)]
        defendants: PathBuf,
        #[arg(long)]
        survey: PathBuf,
        /// Schema manifest; the built-in schema is used when omitted.
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        include_race: bool,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the configured experiment and write reports.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// per_respondent:<id> | pooled_median | pooled_rounded_mean
        #[arg(long)]
        label_mode: Option<String>,
        /// literal | symmetric
        #[arg(long)]
        triplet_variant: Option<String>,
    },
    /// Bail-rate and confidence-accuracy tables for a survey file.
    ReportSurvey {
        #[arg(long)]
        survey: PathBuf,
        #[arg(long, default_value_t = DEFAULT_HIGH_CONFIDENCE)]
        confidence_threshold: i32,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Dump the triplet set built from a dataset's labels as CSV (a,b,c).
    Triplets {
        #[arg(long)]
        defendants: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        #[arg(long)]
        include_race: bool,
        /// Use survey ratings as labels instead of decile scores.
        #[arg(long)]
        survey: Option<PathBuf>,
        #[arg(long, default_value = "pooled_median")]
        label_mode: String,
        #[arg(long, default_value_t = 0.0)]
        sigma: f64,
        #[arg(long, default_value = "literal")]
        triplet_variant: String,
        /// Keep a seeded uniform subsample of this size.
        #[arg(long)]
        subsample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn load_schema(schema: Option<&Path>, include_race: bool) -> Result<FeatureSchema> {
    match schema {
        Some(p) => FeatureSchema::from_manifest(p),
        None => Ok(FeatureSchema::default_compas(include_race)),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.threads {
        crate::exec::init_threads(t).map_err(Error::Config)?;
    }
    match cli.command {
        Command::Ingest {
            defendants,
            survey,
            schema,
            include_race,
            out_dir,
        } => cmd_ingest(&defendants, &survey, schema.as_deref(), include_race, &out_dir).map(drop),
        Command::Experiment {
            config,
            seed,
            out_dir,
            label_mode,
            triplet_variant,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.experiment.rng_seed = s;
            }
            if let Some(d) = out_dir {
                cfg.out_dir = d;
            }
            if let Some(m) = label_mode {
                cfg.data.label_mode = m.parse()?;
            }
            if let Some(v) = triplet_variant {
                cfg.experiment.triplet_variant = v.parse()?;
            }
            print!("{}", cmd_experiment(&cfg)?);
            Ok(())
        }
        Command::ReportSurvey {
            survey,
            confidence_threshold,
            out_dir,
        } => {
            let text = cmd_report_survey(&survey, confidence_threshold, out_dir.as_deref())?;
            print!("{text}");
            Ok(())
        }
        Command::Triplets {
            defendants,
            schema,
            include_race,
            survey,
            label_mode,
            sigma,
            triplet_variant,
            subsample,
            seed,
            out,
        } => {
            let schema = load_schema(schema.as_deref(), include_race)?;
            let mut dataset = load_defendants(&defendants, &schema)?;
            if let Some(s) = survey {
                dataset = attach_labels(&dataset, &load_survey(&s)?, &label_mode.parse()?)?;
            }
            let variant: TripletVariant = triplet_variant.parse()?;
            let mut set = build_triplets(&dataset, sigma, variant)?;
            if let Some(m) = subsample {
                set = subsample_triplets(&set, m, seed)?;
            }
            let file = fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
            write_triplets_csv(&set, std::io::BufWriter::new(file))?;
            eprintln!("wrote {} triplets to {}", set.len(), out.display());
            Ok(())
        }
    }
}

/// Validates both inputs before writing anything, then writes canonical CSVs
/// and `summary.txt` into `out_dir`.
pub fn cmd_ingest(
    defendants_path: &Path,
    survey_path: &Path,
    schema_path: Option<&Path>,
    include_race: bool,
    out_dir: &Path,
) -> Result<String> {
    let schema = load_schema(schema_path, include_race)?;
    let defendants = load_defendants(defendants_path, &schema)?;
    let survey = load_survey(survey_path)?;
    let labeled = attach_labels(&defendants, &survey, &LabelMode::PooledMedian)?;
    let respondents = respondent_ids(&survey);

    let mut summary = String::new();
    writeln!(summary, "defendants_file: {}", defendants_path.display()).unwrap();
    writeln!(summary, "survey_file: {}", survey_path.display()).unwrap();
    writeln!(summary, "defendants: {}", defendants.len()).unwrap();
    writeln!(summary, "encoded_dimension: {}", defendants.dim()).unwrap();
    writeln!(summary, "survey_records: {}", survey.len()).unwrap();
    writeln!(summary, "respondents: {}", respondents.len()).unwrap();
    writeln!(summary, "surveyed_defendants: {}", labeled.len()).unwrap();

    create_dir(out_dir)?;
    let mut buf = Vec::new();
    write_dataset_csv(&defendants, &mut buf)?;
    write_file(&out_dir.join("defendants.csv"), &buf)?;
    buf.clear();
    write_survey_csv(&survey, &mut buf)?;
    write_file(&out_dir.join("survey.csv"), &buf)?;
    write_file(&out_dir.join("schema.toml"), schema.to_manifest())?;
    write_file(&out_dir.join("summary.txt"), &summary)?;
    eprint!("{summary}");
    Ok(summary)
}

/// Loads the dataset a run config points at, labelled as configured.
pub fn load_run_dataset(cfg: &RunConfig) -> Result<LabeledDataset> {
    let schema = load_schema(cfg.data.schema.as_deref(), cfg.data.include_race)?;
    let defendants = load_defendants(&cfg.data.defendants, &schema)?;
    match cfg.data.labels {
        LabelSource::Compas => Ok(defendants),
        LabelSource::Survey => {
            let path = cfg
                .data
                .survey
                .as_ref()
                .ok_or_else(|| Error::Config("survey labels need data.survey".into()))?;
            attach_labels(&defendants, &load_survey(path)?, &cfg.data.label_mode)
        }
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect()
}

fn write_metrics(dir: &Path, outcomes: &[RepeatOutcome]) -> Result<usize> {
    create_dir(dir)?;
    let mut ok = 0;
    for o in outcomes {
        for l in &o.learners {
            let path = dir.join(format!("repeat{:02}_{}.txt", o.repeat, file_stem(&l.name)));
            match &l.metric {
                Ok(m) => {
                    ok += 1;
                    write_file(&path, m.to_text())?
                }
                Err(e) => write_file(&path.with_extension("err"), format!("{e}\n"))?,
            }
        }
    }
    Ok(ok)
}

/// Runs the configured protocol and writes reports, per-repeat metrics and
/// `run_info.txt`. Returns the text grid.
pub fn cmd_experiment(cfg: &RunConfig) -> Result<String> {
    let dataset = load_run_dataset(cfg)?;
    let exp = &cfg.experiment;
    exp.validate(dataset.len())?;
    create_dir(&cfg.out_dir)?;

    let mut info = String::new();
    writeln!(info, "mode: {:?}", cfg.mode).unwrap();
    writeln!(info, "labels: {:?}", cfg.data.labels).unwrap();
    if cfg.data.labels == LabelSource::Survey {
        writeln!(info, "label_mode: {}", cfg.data.label_mode).unwrap();
    }
    writeln!(info, "instances: {}", dataset.len()).unwrap();
    writeln!(info, "dimension: {}", dataset.dim()).unwrap();
    writeln!(info, "seed: {}", exp.rng_seed).unwrap();
    writeln!(info, "split: {}/{} x {}", exp.train_size, exp.test_size, exp.n_repeats).unwrap();
    writeln!(info, "triplet_variant: {}", exp.triplet_variant).unwrap();
    writeln!(info, "triplet_subsample: {}", exp.triplet_subsample).unwrap();
    writeln!(info, "k_neighbors: {}", exp.k_neighbors).unwrap();
    writeln!(info, "lsml_alpha: {}", exp.lsml.alpha).unwrap();
    writeln!(info, "lmnn: k_targets={} mu={}", exp.lmnn.k_targets, exp.lmnn.mu).unwrap();
    writeln!(info, "mmc_form: {:?}", exp.mmc.form).unwrap();
    writeln!(info, "dispersion: sample standard deviation across repeats").unwrap();

    let (any_ok, outcomes, grid) = match cfg.mode {
        Mode::Compare => {
            writeln!(info, "sigma_train: {}", exp.sigma_train).unwrap();
            writeln!(info, "sigma_test: {}", exp.sigma_test).unwrap();
            let menu = LearnerSpec::full_menu();
            let outcomes = run_repeats(exp, &dataset, &menu, &[exp.sigma_test])?;
            let names: Vec<String> = menu.iter().map(LearnerSpec::name).collect();
            let report = aggregate(&outcomes, &names, 0);
            write_file(&cfg.out_dir.join("report.csv"), report.to_csv())?;
            write_file(&cfg.out_dir.join("report.txt"), report.to_text_grid())?;
            (
                report.cells.iter().any(|c| c.summary.is_some()),
                outcomes,
                report.to_text_grid(),
            )
        }
        Mode::Sweep => {
            writeln!(info, "sigma_train_list: {:?}", cfg.sigma_train_list).unwrap();
            writeln!(info, "sigma_test_list: {:?}", cfg.sigma_test_list).unwrap();
            let (table, outcomes) = sigma_sweep(exp, &dataset, &cfg.sigma_train_list, &cfg.sigma_test_list)?;
            write_file(&cfg.out_dir.join("sweep.csv"), table.to_csv())?;
            write_file(&cfg.out_dir.join("sweep.txt"), table.to_text_grid())?;
            (
                table.cells.iter().flatten().any(Option::is_some),
                outcomes,
                table.to_text_grid(),
            )
        }
    };
    write_file(&cfg.out_dir.join("run_info.txt"), &info)?;
    write_metrics(&cfg.out_dir.join("metrics"), &outcomes)?;
    if !any_ok {
        return Err(Error::Numerical("every report cell failed".into()));
    }
    Ok(grid)
}

/// Both survey tables as text; also written as text and CSV when `out_dir` is given.
pub fn cmd_report_survey(survey_path: &Path, threshold: i32, out_dir: Option<&Path>) -> Result<String> {
    let records = load_survey(survey_path)?;
    let bail = bail_rate_table(&records)?;
    let acc = confidence_accuracy_table(&records, threshold)?;
    let text = format!(
        "Bail rate by recidivism prediction\n{}\nBail decision accuracy by confidence\n{}",
        bail.to_text(),
        acc.to_text()
    );
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_file(&dir.join("bail_rate.txt"), bail.to_text())?;
        write_file(&dir.join("bail_rate.csv"), bail.to_csv())?;
        write_file(&dir.join("confidence_accuracy.txt"), acc.to_text())?;
        write_file(&dir.join("confidence_accuracy.csv"), acc.to_csv())?;
    }
    Ok(text)
}
