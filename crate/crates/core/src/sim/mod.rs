//! Federated-learning simulation around the trust components.

pub mod bootstrap;
pub mod client;
pub mod data;
pub mod experiment;
pub mod model;
pub mod roc;

pub use bootstrap::{
    bootstrap_server, evaluate_bootstrap, generate_corpus, BootstrapCorpus, BootstrapOutcome,
    BootstrapReport, CorpusSpec, HistorySpec, Recommender,
};
pub use client::{
    generate_resource_trace, local_train, AdversaryBehavior, BehaviorKind, ClientProfile,
    TaskDemand,
};
pub use data::{partition_dataset, DataSplit, Dataset, Partition, PartitionSpec};
pub use experiment::{run_experiment, Method, MetricsLog, MetricsRow, SimConfig, SimOutcome};
pub use model::{evaluate, fedavg, ModelShape, ModelWeights, TrainParams};
pub use roc::{roc_curve, RocCurve, RocPoint};
