//! JSON experiment configuration. Every field has a default; the resolved
//! configuration is echoed next to the results.

use std::env;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::synth::SynthSpec;
use crate::sim::bootstrap::{CorpusSpec, HistorySpec};
use crate::sim::client::{AdversaryBehavior, TaskDemand};
use crate::sim::data::PartitionSpec;
use crate::sim::experiment::{CapacityRanges, SimConfig};
use crate::sim::model::TrainParams;

pub const DATA_DIR_ENV: &str = "FEDTRUST_DATA_DIR";

/// One value, or a list that runs the experiment once per value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FractionSetting {
    Single(f64),
    Sweep(Vec<f64>),
}

impl FractionSetting {
    pub fn values(&self) -> Vec<f64> {
        match self {
            FractionSetting::Single(f) => vec![*f],
            FractionSetting::Sweep(v) => v.clone(),
        }
    }

    pub fn is_sweep(&self) -> bool {
        matches!(self, FractionSetting::Sweep(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SynthSpec),
    /// MNIST-style IDX files. Without `dir`, `FEDTRUST_DATA_DIR` is used.
    Idx {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        dir: Option<PathBuf>,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SynthSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapSettings {
    /// Non-federation servers that appear in device histories.
    pub background_servers: usize,
    pub history: HistorySpec,
    pub max_source_mass: f64,
    pub dishonest_recommenders: bool,
    /// Also score a labelled corpus and write its ROC curve.
    pub roc: bool,
    pub corpus: CorpusSpec,
}

impl Default for BootstrapSettings {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            background_servers: sim.background_servers,
            history: sim.history,
            max_source_mass: sim.max_source_mass,
            dishonest_recommenders: sim.dishonest_recommenders,
            roc: true,
            corpus: CorpusSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// Credibility ledgers to start from, as written by a previous run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_ledger: Option<PathBuf>,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
            initial_ledger: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub n_devices: usize,
    pub n_servers: usize,
    pub quota: usize,
    pub rounds: usize,
    pub untrustworthy_fraction: FractionSetting,
    pub adversary: Vec<AdversaryBehavior>,
    pub new_devices_per_round: usize,
    pub dataset: DatasetSource,
    pub model: TrainParams,
    pub partition: PartitionSpec,
    pub capacity: CapacityRanges,
    pub demand: TaskDemand,
    pub bootstrap: BootstrapSettings,
    pub output: OutputSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let sim = SimConfig::default();
        Self {
            seed: sim.seed,
            n_devices: sim.n_devices,
            n_servers: sim.n_servers,
            quota: sim.quota,
            rounds: sim.rounds,
            untrustworthy_fraction: FractionSetting::Single(sim.untrustworthy_fraction),
            adversary: sim.adversary,
            new_devices_per_round: sim.new_devices_per_round,
            dataset: DatasetSource::default(),
            model: sim.train,
            partition: sim.partition,
            capacity: sim.capacity,
            demand: sim.demand,
            bootstrap: BootstrapSettings::default(),
            output: OutputSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Table {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Simulation settings for one untrustworthy fraction.
    pub fn sim(&self, untrustworthy_fraction: f64) -> SimConfig {
        SimConfig {
            seed: self.seed,
            n_devices: self.n_devices,
            n_servers: self.n_servers,
            quota: self.quota,
            rounds: self.rounds,
            untrustworthy_fraction,
            adversary: self.adversary.clone(),
            new_devices_per_round: self.new_devices_per_round,
            partition: self.partition,
            train: self.model,
            demand: self.demand,
            capacity: self.capacity,
            background_servers: self.bootstrap.background_servers,
            history: self.bootstrap.history,
            max_source_mass: self.bootstrap.max_source_mass,
            dishonest_recommenders: self.bootstrap.dishonest_recommenders,
        }
    }

    /// Every problem at once, as [`Error::ConfigErrors`].
    pub fn validate(&self) -> Result<()> {
        let mut errors: Vec<String> = Vec::new();
        let fractions = self.untrustworthy_fraction.values();
        if fractions.is_empty() {
            errors.push("untrustworthy_fraction sweep is empty".into());
        }
        for f in fractions.iter().copied().chain(
            // Still check everything else when the sweep is empty.
            fractions.is_empty().then_some(0.0),
        ) {
            if let Err(Error::ConfigErrors(es)) = self.sim(f).validate() {
                for e in es {
                    if !errors.contains(&e) {
                        errors.push(e);
                    }
                }
            }
        }
        match &self.dataset {
            DatasetSource::Synthetic(s) => {
                if s.classes == 0 || s.train < s.classes || s.test == 0 {
                    errors.push(format!(
                        "synthetic dataset needs train >= classes >= 1 and test >= 1, got train {}, test {}, classes {}",
                        s.train, s.test, s.classes
                    ));
                }
                if !(s.noise.is_finite() && s.noise >= 0.0) {
                    errors.push(format!("synthetic noise must be >= 0, got {}", s.noise));
                }
                if self.partition.labels_max > s.classes {
                    errors.push(format!(
                        "clients cannot hold {} labels of a {}-class dataset",
                        self.partition.labels_max, s.classes
                    ));
                }
            }
            DatasetSource::Idx { dir } => {
                if dir.is_none() && env::var_os(DATA_DIR_ENV).is_none() {
                    errors.push(format!(
                        "idx dataset needs dataset.dir or the {DATA_DIR_ENV} environment variable"
                    ));
                }
            }
        }
        if self.bootstrap.roc && self.bootstrap.corpus.servers < 2 {
            errors.push("bootstrap corpus needs at least 2 servers".into());
        }
        if self.output.dir.as_os_str().is_empty() {
            errors.push("output.dir must not be empty".into());
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigErrors(errors))
        }
    }

    /// Fills in anything taken from the environment so the echo is complete.
    pub fn resolved(&self) -> Self {
        let mut out = self.clone();
        if let DatasetSource::Idx { dir: None } = &out.dataset {
            out.dataset = DatasetSource::Idx {
                dir: env::var_os(DATA_DIR_ENV).map(PathBuf::from),
            };
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.untrustworthy_fraction = FractionSetting::Sweep(vec![0.1, 0.3]);
        cfg.dataset = DatasetSource::Idx { dir: Some("data".into()) };
        let back = ExperimentConfig::from_json(&cfg.to_json().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_nested_objects_keep_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"model": {"epochs": 5}, "dataset": {"source": "synthetic", "train": 500}}"#,
        )
        .unwrap();
        assert_eq!(cfg.model.epochs, 5);
        assert_eq!(cfg.model.batch_size, TrainParams::default().batch_size);
        assert_eq!(
            cfg.dataset,
            DatasetSource::Synthetic(SynthSpec { train: 500, ..SynthSpec::default() })
        );
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"roundz": 3}"#).is_err());
    }

    #[test]
    fn sweep_parses() {
        let cfg = ExperimentConfig::from_json(r#"{"untrustworthy_fraction": [0.1, 0.2, 0.4]}"#)
            .unwrap();
        assert_eq!(cfg.untrustworthy_fraction.values(), vec![0.1, 0.2, 0.4]);
    }

    #[test]
    fn all_errors_reported_together() {
        let cfg = ExperimentConfig::from_json(
            r#"{"rounds": 0, "quota": 50, "untrustworthy_fraction": [0.2, 1.4],
                "output": {"dir": ""}}"#,
        )
        .unwrap();
        match cfg.validate() {
            Err(Error::ConfigErrors(es)) => assert_eq!(es.len(), 4, "{es:?}"),
            other => panic!("{other:?}"),
        }
    }
}
