//! Recommender-based trust bootstrapping of servers a device has never used.
//!
//! A simulated world holds servers with a hidden trustworthiness flag.
//! Devices accumulate noisy interaction histories with those servers, fit a
//! tree to them and answer queries from peers; the asking device combines
//! the answers and re-weights the peers.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::credibility::{CredibilityLedger, Endorsement};
use crate::dst::{aggregate, decide, make_bpa, Belief, TrustDecision};
use crate::error::{Error, Result};
use crate::ids::{DeviceId, ServerId};
use crate::recommender_tree::{
    build_tree, predict, DecisionTree, HistoryDataset, InteractionRecord, Prediction, TrustStatus,
};
use crate::sim::roc::{roc_curve, RocCurve};

pub const LOCATIONS: [&str; 5] = ["Africa", "America", "Asia", "Europe", "Oceania"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServerProfile {
    pub id: ServerId,
    pub location: String,
    pub trustworthy: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub servers: Vec<ServerProfile>,
}

impl World {
    /// `count` servers with ids `first_id..`, each trustworthy with
    /// probability `trustworthy_fraction`.
    pub fn generate<R: Rng + ?Sized>(
        first_id: u32,
        count: usize,
        trustworthy_fraction: f64,
        rng: &mut R,
    ) -> Self {
        let servers = (0..count as u32)
            .map(|i| ServerProfile {
                id: ServerId(first_id + i),
                location: random_location(rng).to_string(),
                trustworthy: rng.random_bool(trustworthy_fraction.clamp(0.0, 1.0)),
            })
            .collect();
        Self { servers }
    }

    pub fn get(&self, id: ServerId) -> Option<&ServerProfile> {
        self.servers.iter().find(|s| s.id == id)
    }
}

pub fn random_location<R: Rng + ?Sized>(rng: &mut R) -> &'static str {
    LOCATIONS.choose(rng).expect("non-empty")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HistorySpec {
    /// Interactions per device.
    pub records: usize,
    /// Chance an interaction happens at the device's home location.
    pub home_bias: f64,
    /// Chance the recorded outcome contradicts the server's true nature.
    pub label_noise: f64,
}

impl Default for HistorySpec {
    fn default() -> Self {
        Self {
            records: 40,
            home_bias: 0.7,
            label_noise: 0.1,
        }
    }
}

/// A device's past interactions with servers drawn uniformly from `world`.
pub fn generate_history<R: Rng + ?Sized>(
    world: &World,
    home: &str,
    spec: &HistorySpec,
    rng: &mut R,
) -> Result<HistoryDataset> {
    if world.servers.is_empty() {
        return Err(Error::invalid("cannot build a history in an empty world"));
    }
    let records = (0..spec.records)
        .map(|_| {
            let server = world.servers.choose(rng).expect("non-empty");
            let location = if rng.random_bool(spec.home_bias) {
                home.to_string()
            } else {
                random_location(rng).to_string()
            };
            let honest = server.trustworthy != rng.random_bool(spec.label_noise);
            let (status, score) = if honest {
                (TrustStatus::Trustworthy, rng.random_range(90.0..=100.0))
            } else {
                (TrustStatus::Untrustworthy, rng.random_range(60.0..90.0))
            };
            InteractionRecord {
                server_id: server.id.to_string(),
                location,
                payment: None,
                trust_score: Some(score),
                trust_status: Some(status),
            }
        })
        .collect();
    HistoryDataset::with_default_attributes(records)
}

/// A peer able to answer trust queries from its own history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommender<K> {
    pub id: K,
    pub tree: DecisionTree,
    /// Reports the opposite of what its history says.
    pub dishonest: bool,
}

impl<K> Recommender<K> {
    pub fn from_history(id: K, history: &HistoryDataset, dishonest: bool) -> Result<Self> {
        Ok(Self {
            id,
            tree: build_tree(history)?,
            dishonest,
        })
    }

    pub fn answer(&self, query: &InteractionRecord) -> Prediction {
        let p = predict(&self.tree, query);
        if self.dishonest {
            Prediction {
                label: p.label.flipped(),
                confidence: p.confidence,
            }
        } else {
            p
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapOutcome {
    pub belief: Belief,
    pub decision: TrustDecision,
}

/// Asks every recommender about `query`, combines the answers and updates
/// the asker's credibility ledger.
///
/// Each answer commits `credibility * max_source_mass * confidence`; keeping
/// `max_source_mass` below 1 stops any single peer from vetoing the rest.
pub fn bootstrap_server<K: Ord + Clone>(
    ledger: &mut CredibilityLedger<K>,
    recommenders: &[&Recommender<K>],
    query: &InteractionRecord,
    max_source_mass: f64,
) -> Result<BootstrapOutcome> {
    if recommenders.is_empty() {
        return Err(Error::invalid("bootstrapping needs at least one recommender"));
    }
    let answers: Vec<Prediction> = recommenders.iter().map(|r| r.answer(query)).collect();
    let masses = recommenders
        .iter()
        .zip(&answers)
        .map(|(r, p)| make_bpa(p, ledger.get(&r.id) * max_source_mass))
        .collect::<Result<Vec<_>>>()?;
    let belief = aggregate(&masses)?;
    for (r, p) in recommenders.iter().zip(&answers) {
        ledger.update(
            Endorsement {
                recommender: r.id.clone(),
                verdict: p.label,
            },
            &belief,
        );
    }
    Ok(BootstrapOutcome {
        belief,
        decision: decide(&belief),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapReport {
    pub outcomes: Vec<BootstrapOutcome>,
    /// Belief in trustworthiness per query, in query order.
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
    pub roc: RocCurve,
}

/// Bootstraps every labelled query in order with one shared ledger and
/// scores the beliefs against the labels.
pub fn evaluate_bootstrap<K: Ord + Clone>(
    ledger: &mut CredibilityLedger<K>,
    recommenders: &[Recommender<K>],
    queries: &[InteractionRecord],
    max_source_mass: f64,
) -> Result<BootstrapReport> {
    let refs: Vec<&Recommender<K>> = recommenders.iter().collect();
    let mut outcomes = Vec::with_capacity(queries.len());
    let mut labels = Vec::with_capacity(queries.len());
    for (i, q) in queries.iter().enumerate() {
        let status = q
            .trust_status
            .ok_or_else(|| Error::invalid(format!("query {i} has no ground-truth status")))?;
        labels.push(status.is_trustworthy());
        outcomes.push(bootstrap_server(ledger, &refs, q, max_source_mass)?);
    }
    let scores: Vec<f64> = outcomes.iter().map(|o| o.belief.t).collect();
    let roc = roc_curve(&scores, &labels)?;
    Ok(BootstrapReport {
        outcomes,
        scores,
        labels,
        roc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub servers: usize,
    pub recommenders: usize,
    pub trustworthy_fraction: f64,
    pub dishonest_fraction: f64,
    pub history: HistorySpec,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            servers: 50,
            recommenders: 6,
            trustworthy_fraction: 0.5,
            dishonest_fraction: 0.0,
            history: HistorySpec::default(),
        }
    }
}

/// Labelled servers plus the peers who know them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCorpus {
    pub world: World,
    pub recommenders: Vec<Recommender<DeviceId>>,
    pub queries: Vec<InteractionRecord>,
}

/// Builds a corpus in which both classes are present.
pub fn generate_corpus<R: Rng + ?Sized>(spec: &CorpusSpec, rng: &mut R) -> Result<BootstrapCorpus> {
    if spec.servers < 2 || spec.recommenders == 0 {
        return Err(Error::Config(
            "a bootstrap corpus needs at least 2 servers and 1 recommender".into(),
        ));
    }
    let mut world = World::generate(0, spec.servers, spec.trustworthy_fraction, rng);
    // Guarantee both classes so the ROC curve is defined.
    world.servers[0].trustworthy = true;
    world.servers[1].trustworthy = false;

    let dishonest = (spec.dishonest_fraction * spec.recommenders as f64).round() as usize;
    let recommenders = (0..spec.recommenders)
        .map(|i| {
            let home = random_location(rng);
            let history = generate_history(&world, home, &spec.history, rng)?;
            Recommender::from_history(DeviceId(i as u32), &history, i < dishonest)
        })
        .collect::<Result<Vec<_>>>()?;
    let home = random_location(rng);
    let queries = world
        .servers
        .iter()
        .map(|s| InteractionRecord {
            trust_status: Some(if s.trustworthy {
                TrustStatus::Trustworthy
            } else {
                TrustStatus::Untrustworthy
            }),
            ..InteractionRecord::query(s.id.to_string(), home)
        })
        .collect();
    Ok(BootstrapCorpus {
        world,
        recommenders,
        queries,
    })
}
