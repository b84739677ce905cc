//! Configuration, dataset loading and artifact output for experiment runs.

pub mod config;
pub mod idx;
pub mod output;
pub mod run;
pub mod synth;
pub mod tables;

pub use config::{DatasetSource, ExperimentConfig, FractionSetting};
pub use idx::load_idx;
pub use run::{load_dataset, run, run_file, RunArtifacts};
pub use synth::{synth_dataset, synth_split, SynthSpec};
