//! End-to-end execution of a configuration file.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::credibility::CredibilityLedger;
use crate::error::{Error, Result};
use crate::experiments::config::{DatasetSource, ExperimentConfig, DATA_DIR_ENV};
use crate::experiments::idx::{load_idx, mnist_paths};
use crate::experiments::output::{
    read_ledgers, write_json_file, write_metrics_file, write_roc_file,
};
use crate::experiments::synth::synth_split;
use crate::sim::bootstrap::{evaluate_bootstrap, generate_corpus};
use crate::sim::data::DataSplit;
use crate::sim::experiment::{run_experiment, SimOutcome};

/// Files written by [`run`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    /// One per untrustworthy fraction.
    pub metrics: Vec<PathBuf>,
    pub ledgers: Vec<PathBuf>,
    pub config_echo: PathBuf,
    pub roc: Option<PathBuf>,
}

pub fn load_dataset(source: &DatasetSource, seed: u64) -> Result<DataSplit> {
    match source {
        DatasetSource::Synthetic(spec) => synth_split(spec, seed),
        DatasetSource::Idx { dir } => {
            let dir = dir
                .clone()
                .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
                .ok_or_else(|| {
                    Error::Config(format!("no idx directory and {DATA_DIR_ENV} is unset"))
                })?;
            let (ti, tl) = mnist_paths(&dir, true);
            let (vi, vl) = mnist_paths(&dir, false);
            Ok(DataSplit {
                train: load_idx(&ti, &tl)?,
                test: load_idx(&vi, &vl)?,
            })
        }
    }
}

/// File-name suffix for one sweep point, e.g. `_u0.25`.
fn sweep_suffix(config: &ExperimentConfig, fraction: f64) -> String {
    if config.untrustworthy_fraction.is_sweep() {
        format!("_u{fraction}")
    } else {
        String::new()
    }
}

/// Validates, runs every sweep point and writes the artifacts into
/// `config.output.dir`.
pub fn run(config: &ExperimentConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let config = config.resolved();
    let initial = config
        .output
        .initial_ledger
        .as_deref()
        .map(read_ledgers)
        .transpose()?;
    let data = load_dataset(&config.dataset, config.seed)?;

    let dir = &config.output.dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut artifacts = RunArtifacts {
        metrics: Vec::new(),
        ledgers: Vec::new(),
        config_echo: dir.join("resolved_config.json"),
        roc: None,
    };
    write_json_file(&artifacts.config_echo, &config)?;

    for fraction in config.untrustworthy_fraction.values() {
        let outcome: SimOutcome = run_experiment(&config.sim(fraction), &data, initial.as_ref())?;
        let suffix = sweep_suffix(&config, fraction);
        let metrics = dir.join(format!("metrics{suffix}.csv"));
        write_metrics_file(&metrics, &outcome.metrics)?;
        let ledgers = dir.join(format!("ledgers{suffix}.json"));
        write_json_file(&ledgers, &outcome.ledgers)?;
        artifacts.metrics.push(metrics);
        artifacts.ledgers.push(ledgers);
    }

    if config.bootstrap.roc {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let corpus = generate_corpus(&config.bootstrap.corpus, &mut rng)?;
        let report = evaluate_bootstrap(
            &mut CredibilityLedger::default(),
            &corpus.recommenders,
            &corpus.queries,
            config.bootstrap.max_source_mass,
        )?;
        let path = dir.join("roc.csv");
        write_roc_file(&path, &report.roc)?;
        artifacts.roc = Some(path);
    }
    Ok(artifacts)
}

/// [`run`] on a configuration file, optionally overriding seed and output
/// directory.
pub fn run_file(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunArtifacts> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(out) = out {
        config.output.dir = out;
    }
    run(&config)
}
