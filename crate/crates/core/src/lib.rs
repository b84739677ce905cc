//! Mutual-trust client/server selection for federated learning.
//!
//! Servers score client devices from their resource-utilization traces
//! ([`resource_trust`]); devices bootstrap trust in newcomer servers by
//! asking neighbours, each of which consults an ID3 tree over its own
//! interaction history ([`recommender_tree`]), combining the answers with
//! Dempster's rule ([`dst`]) and re-weighting the neighbours afterwards
//! ([`credibility`]). Both sides then rank each other by trust and are paired
//! by quota-constrained deferred acceptance ([`matching`]).
//!
//! [`sim`] wraps all of this in a FedAvg simulation with adversarial clients
//! and a random-selection baseline, and [`experiments`] provides the
//! configuration, dataset loaders and CSV output used by the `fedtrust` CLI.

pub mod credibility;
pub mod dst;
pub mod error;
pub mod experiments;
pub mod ids;
pub mod matching;
pub mod recommender_tree;
pub mod resource_trust;
pub mod sim;

pub use credibility::{CredibilityLedger, Endorsement};
pub use dst::{aggregate, combine, decide, make_bpa, Belief, BeliefMass, TrustDecision};
pub use error::{Error, Result};
pub use ids::{DeviceId, ServerId};
pub use matching::{
    build_device_preferences, build_server_preferences, find_blocking_pairs, run_matching,
    BlockingPair, Matching, PreferenceList,
};
pub use recommender_tree::{
    build_tree, entropy, information_gain, predict, Attribute, DecisionTree, HistoryDataset,
    InteractionRecord, Prediction, TrustStatus,
};
pub use resource_trust::{
    assess_device, compute_fences, device_trust, reference_fences, score_feature, DeviceTrust,
    FeatureAnomaly, Fences, ReferenceSample, ResourceFeature, ResourceTrace,
};
