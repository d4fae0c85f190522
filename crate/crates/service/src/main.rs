//! `aico`: command-line front end for extraction, corpus statistics, cohort
//! evaluation, what-if scenarios, synthetic data and the HTTP service.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use aico_core::{
    cohort, common_variables, compare, evaluate_scenario, generate, ingest_trials, variable_frequency, Comparison,
    ComputableCriterion, CriteriaOptions, Corpus, EntityType, GeneralizabilityReport, GradePreset,
    IndexPeriod, MeasurementPolicy, MissingPolicy, PatientStore, PopulationConfig, Resources, Scenario, Selection,
};
use aico_service::AppState;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "aico", version, about = "Trial generalizability and what-if analysis")]
struct Cli {
    /// Directory with lexicon.txt, synonyms.txt, conversions.csv or uln.csv
    /// overriding the builtin tables.
    #[arg(long, global = true)]
    resources: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print extracted entities as JSON lines.
    Extract {
        #[arg(long)]
        trials: PathBuf,
        /// Only this trial.
        #[arg(long)]
        trial: Option<String>,
    },
    #[command(subcommand)]
    Corpus(CorpusCommand),
    #[command(subcommand)]
    Cohort(CohortCommand),
    #[command(subcommand)]
    Whatif(WhatifCommand),
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Serve the HTTP JSON API.
    Serve {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        trials: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Per-request evaluation budget in milliseconds.
        #[arg(long, default_value_t = 2000)]
        budget_ms: u64,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Variable frequency table, tab-separated.
    Stats {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long = "type", default_value = "clinical_variable")]
        entity_type: String,
        #[arg(long, conflicts_with = "min_support")]
        top: Option<usize>,
        #[arg(long)]
        min_support: Option<usize>,
    },
}

#[derive(Subcommand)]
enum CohortCommand {
    /// Evaluate a cohort definition and print a GeneralizabilityReport.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        /// JSON cohort definition (icd_prefix, index_period, optional criteria).
        #[arg(long)]
        criteria: PathBuf,
        /// Take criteria from this trial when the definition has none.
        #[arg(long)]
        trial: Option<String>,
        #[arg(long, requires = "trial")]
        trials: Option<PathBuf>,
        #[arg(long, default_value = "exclude")]
        policy: MissingPolicy,
    },
}

#[derive(Subcommand)]
enum WhatifCommand {
    /// Evaluate one scenario file.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Evaluate several scenarios and compare them against the first.
    Compare {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long = "scenario", required = true, num_args = 1..)]
        scenarios: Vec<PathBuf>,
    },
    /// Print a grade preset's thresholds and overrides.
    Presets {
        #[arg(long)]
        grade: GradePreset,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Write diagnoses.csv and labs.csv.
    Generate {
        #[arg(long)]
        seed: u64,
        /// Population config JSON; the builtin breast-cancer mix when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Patient count for the builtin config.
        #[arg(long, default_value_t = 10_000, conflicts_with = "config")]
        patients: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// Directory with diagnoses.csv and labs.csv.
    #[arg(long)]
    data: PathBuf,
}

/// Input of `cohort eval`.
#[derive(Debug, Deserialize)]
struct CohortDefinition {
    #[serde(default)]
    label: Option<String>,
    icd_prefix: String,
    index_period: IndexPeriod,
    #[serde(default)]
    criteria: Option<Vec<ComputableCriterion>>,
    #[serde(default)]
    measurement_policy: MeasurementPolicy,
}

#[derive(Serialize)]
struct CompareOutput {
    reports: Vec<GeneralizabilityReport>,
    comparison: Comparison,
}

#[derive(Serialize)]
struct PresetOutput {
    grade: GradePreset,
    criteria: Vec<ComputableCriterion>,
    overrides: Vec<aico_core::Override>,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let resources = match &cli.resources {
        Some(dir) => Resources::from_dir(dir).with_context(|| format!("loading resources from {}", dir.display()))?,
        None => Resources::builtin(),
    };
    let mut out = io::stdout().lock();
    match cli.command {
        Command::Extract { trials, trial } => {
            let corpus = ingest_trials(&trials)?;
            let selected: Vec<_> = match &trial {
                Some(id) => vec![corpus.get(id).with_context(|| format!("unknown trial {id}"))?],
                None => corpus.trials().iter().collect(),
            };
            for t in selected {
                for entity in resources.trial_entities(t)? {
                    writeln!(out, "{}", serde_json::to_string(&entity)?)?;
                }
            }
        }
        Command::Corpus(CorpusCommand::Stats {
            trials,
            entity_type,
            top,
            min_support,
        }) => {
            let entity_type: EntityType = serde_json::from_value(serde_json::Value::String(entity_type.clone()))
                .with_context(|| format!("unknown entity type {entity_type:?}"))?;
            let corpus = ingest_trials(&trials)?;
            let freq = variable_frequency(&corpus.mentions(&resources)?, entity_type);
            let selection = match (top, min_support) {
                (_, Some(n)) => Selection::MinSupport(n),
                (Some(k), None) => Selection::TopK(k),
                (None, None) => Selection::TopK(20),
            };
            let keep = common_variables(&freq, selection)?;
            let mut writer = csv::WriterBuilder::new().delimiter(b'\t').from_writer(&mut out);
            writer.write_record(["rank", "variable", "n_trials", "n_mentions"])?;
            for (rank, f) in freq.iter().take(keep.len()).enumerate() {
                writer.write_record([
                    (rank + 1).to_string(),
                    f.variable.clone(),
                    f.n_trials.to_string(),
                    f.n_mentions.to_string(),
                ])?;
            }
            writer.flush()?;
        }
        Command::Cohort(CohortCommand::Eval {
            data,
            criteria,
            trial,
            trials,
            policy,
        }) => {
            let definition: CohortDefinition = read_json(&criteria)?;
            let store = load_store(&data.data, &resources)?;
            let base = match (definition.criteria, &trial) {
                (Some(c), _) => c,
                (None, Some(id)) => {
                    let path = trials.context("--trials is required to parse a trial's criteria")?;
                    let corpus = ingest_trials(&path)?;
                    let t = corpus.get(id).with_context(|| format!("unknown trial {id}"))?;
                    resources
                        .trial_criteria(t, &store.available_variables(), CriteriaOptions::default())?
                        .computable
                }
                (None, None) => bail!("the cohort definition has no criteria and no --trial was given"),
            };
            let label = definition.label.or(trial).unwrap_or_else(|| "cohort".into());
            let period = definition.index_period;
            period.validate()?;
            let target = store.target_cohort(&definition.icd_prefix, &period)?;
            let variables: Vec<String> = base.iter().map(|c| c.variable.clone()).collect();
            let vectors = store.resolve_vectors(&target, &variables, &period, definition.measurement_policy);
            let report = cohort::evaluate(&label, &target, &vectors, &base, policy)?;
            write_json(&mut out, &report)?;
        }
        Command::Whatif(WhatifCommand::Eval { data, scenario }) => {
            let scenario: Scenario = read_json(&scenario)?;
            let store = load_store(&data.data, &resources)?;
            write_json(&mut out, &evaluate_scenario(&scenario, &store, &resources)?)?;
        }
        Command::Whatif(WhatifCommand::Compare { data, scenarios }) => {
            let scenarios: Vec<Scenario> = scenarios.iter().map(|p| read_json(p)).collect::<Result<_>>()?;
            let store = load_store(&data.data, &resources)?;
            let reports = scenarios
                .iter()
                .map(|s| evaluate_scenario(s, &store, &resources))
                .collect::<aico_core::Result<Vec<_>>>()?;
            let comparison = compare(&reports)?;
            write_json(&mut out, &CompareOutput { reports, comparison })?;
        }
        Command::Whatif(WhatifCommand::Presets { grade }) => {
            write_json(
                &mut out,
                &PresetOutput {
                    grade,
                    criteria: grade.criteria(),
                    overrides: grade.overrides(),
                },
            )?;
        }
        Command::Synth(SynthCommand::Generate {
            seed,
            config,
            patients,
            out: dir,
        }) => {
            let mut config = match &config {
                Some(path) => PopulationConfig::from_json(&fs::read_to_string(path)?)?,
                None => PopulationConfig::default_config(seed, patients),
            };
            config.seed = seed;
            let files = generate(&config, &resources.conversions)?;
            fs::create_dir_all(&dir)?;
            files.write_to(&dir)?;
            writeln!(out, "wrote {} patients to {}", config.n_patients, dir.display())?;
        }
        Command::Serve {
            data,
            trials,
            addr,
            budget_ms,
        } => {
            let store = load_store(&data.data, &resources)?;
            let corpus = match &trials {
                Some(path) => ingest_trials(path)?,
                None => Corpus::default(),
            };
            let state = AppState::new(store, corpus, resources).with_budget(Duration::from_millis(budget_ms));
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(aico_service::serve(state, &addr))?;
        }
    }
    Ok(())
}

fn load_store(dir: &Path, resources: &Resources) -> Result<PatientStore> {
    PatientStore::ingest_dir(dir, resources).with_context(|| format!("loading patients from {}", dir.display()))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json(out: &mut impl Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

