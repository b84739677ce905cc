//! Round-by-round comparison of trust-based selection against random
//! selection.
//!
//! Both methods see the same devices, data and traces; each server keeps
//! one global model per method. Every random draw comes from a stream
//! derived from the master seed and the draw's role, so results do not
//! depend on thread scheduling.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::credibility::{CredibilityLedger, DEFAULT_CREDIBILITY};
use crate::dst::TrustDecision;
use crate::error::{Error, Result};
use crate::ids::{DeviceId, ServerId};
use crate::matching::{
    build_device_preferences, build_server_preferences, find_blocking_pairs, run_matching,
};
use crate::recommender_tree::InteractionRecord;
use crate::resource_trust::{assess_device, reference_fences, Fences, ResourceFeature, ResourceTrace};
use crate::sim::bootstrap::{
    bootstrap_server, generate_history, random_location, HistorySpec, Recommender, ServerProfile,
    World,
};
use crate::sim::client::{
    generate_resource_trace, local_train, reference_samples, AdversaryBehavior, BehaviorKind,
    Capacities, ClientProfile, TaskDemand,
};
use crate::sim::data::{partition_dataset, DataSplit, PartitionSpec};
use crate::sim::model::{evaluate, fedavg, ModelShape, ModelWeights, TrainParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Trust,
    Vanilla,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::Trust, Method::Vanilla];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Trust => "trust",
            Method::Vanilla => "vanilla",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CapacityRanges {
    pub ram_mb: [f64; 2],
    pub cpu_mips: [f64; 2],
    pub bandwidth_mbps: [f64; 2],
}

impl Default for CapacityRanges {
    fn default() -> Self {
        Self {
            ram_mb: [100.0, 1300.0],
            cpu_mips: [50.0, 1000.0],
            bandwidth_mbps: [50.0, 1300.0],
        }
    }
}

impl CapacityRanges {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Capacities {
        Capacities {
            ram_mb: rng.random_range(self.ram_mb[0]..=self.ram_mb[1]),
            cpu_mips: rng.random_range(self.cpu_mips[0]..=self.cpu_mips[1]),
            bandwidth_mbps: rng.random_range(self.bandwidth_mbps[0]..=self.bandwidth_mbps[1]),
        }
    }
}

/// Everything [`run_experiment`] needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub n_devices: usize,
    pub n_servers: usize,
    /// Devices each server wants per round.
    pub quota: usize,
    pub rounds: usize,
    pub untrustworthy_fraction: f64,
    /// Behaviours every untrustworthy device exhibits.
    pub adversary: Vec<AdversaryBehavior>,
    /// Devices joining at the start of every round after the first.
    pub new_devices_per_round: usize,
    pub partition: PartitionSpec,
    pub train: TrainParams,
    pub demand: TaskDemand,
    pub capacity: CapacityRanges,
    /// Servers outside the federation that devices have histories with.
    pub background_servers: usize,
    pub history: HistorySpec,
    /// Upper bound on the mass any one recommender may commit.
    pub max_source_mass: f64,
    /// Untrustworthy devices also lie when acting as recommenders.
    pub dishonest_recommenders: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_devices: 20,
            n_servers: 2,
            quota: 5,
            rounds: 20,
            untrustworthy_fraction: 0.5,
            adversary: vec![
                AdversaryBehavior {
                    kind: BehaviorKind::ResourceOveruse,
                    intensity: 3.0,
                },
                AdversaryBehavior {
                    kind: BehaviorKind::LabelFlip,
                    intensity: 1.0,
                },
            ],
            new_devices_per_round: 0,
            partition: PartitionSpec::default(),
            train: TrainParams::default(),
            demand: TaskDemand::default(),
            capacity: CapacityRanges::default(),
            background_servers: 30,
            history: HistorySpec::default(),
            max_source_mass: 0.95,
            dishonest_recommenders: false,
        }
    }
}

fn check_range(errors: &mut Vec<String>, name: &str, r: [f64; 2]) {
    if !(r[0].is_finite() && r[1].is_finite() && 0.0 <= r[0] && r[0] <= r[1]) {
        errors.push(format!("{name} must be a finite range [min, max] with 0 <= min <= max"));
    }
}

fn check_unit(errors: &mut Vec<String>, name: &str, x: f64) {
    if !(0.0..=1.0).contains(&x) {
        errors.push(format!("{name} must lie in [0, 1], got {x}"));
    }
}

impl SimConfig {
    /// Every problem at once, as [`Error::ConfigErrors`].
    pub fn validate(&self) -> Result<()> {
        let mut e = Vec::new();
        if self.n_devices == 0 {
            e.push("n_devices must be at least 1".to_string());
        }
        if self.n_servers == 0 {
            e.push("n_servers must be at least 1".to_string());
        }
        if self.quota == 0 || self.quota > self.n_devices {
            e.push(format!(
                "quota must be in 1..={}, got {}",
                self.n_devices, self.quota
            ));
        }
        if self.rounds == 0 {
            e.push("rounds must be at least 1".to_string());
        }
        check_unit(&mut e, "untrustworthy_fraction", self.untrustworthy_fraction);
        for b in &self.adversary {
            if b.kind == BehaviorKind::Honest {
                e.push("adversary behaviours cannot include honest".to_string());
            } else if let Err(err) = AdversaryBehavior::new(b.kind, b.intensity) {
                e.push(format!("adversary: {err}"));
            }
        }
        let p = &self.partition;
        if p.labels_min == 0 || p.labels_min > p.labels_max {
            e.push(format!(
                "partition labels range [{}, {}] is invalid",
                p.labels_min, p.labels_max
            ));
        }
        if p.size_min == 0 || p.size_min > p.size_max {
            e.push(format!(
                "partition size range [{}, {}] is invalid",
                p.size_min, p.size_max
            ));
        }
        if !(self.train.learning_rate.is_finite() && self.train.learning_rate > 0.0) {
            e.push("learning_rate must be positive".to_string());
        }
        if self.train.batch_size == 0 {
            e.push("batch_size must be at least 1".to_string());
        }
        let d = &self.demand;
        if ![d.ram_mb, d.cpu_mips, d.bandwidth_mbps]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0)
        {
            e.push("task demand must be positive".to_string());
        }
        if !(0.0..1.0).contains(&d.spread) {
            e.push(format!("demand spread must lie in [0, 1), got {}", d.spread));
        }
        check_range(&mut e, "ram capacity", self.capacity.ram_mb);
        check_range(&mut e, "cpu capacity", self.capacity.cpu_mips);
        check_range(&mut e, "bandwidth capacity", self.capacity.bandwidth_mbps);
        if self.history.records == 0 {
            e.push("history records must be at least 1".to_string());
        }
        check_unit(&mut e, "history home_bias", self.history.home_bias);
        check_unit(&mut e, "history label_noise", self.history.label_noise);
        if !(self.max_source_mass > 0.0 && self.max_source_mass <= 1.0) {
            e.push(format!(
                "max_source_mass must lie in (0, 1], got {}",
                self.max_source_mass
            ));
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigErrors(e))
        }
    }

    pub fn total_devices(&self) -> usize {
        self.n_devices + self.new_devices_per_round * self.rounds.saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub server: ServerId,
    pub method: Method,
    pub accuracy: f64,
    pub untrusted_selected: usize,
    pub selected: Vec<DeviceId>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsLog {
    pub rows: Vec<MetricsRow>,
}

impl MetricsLog {
    pub fn rows_for(&self, method: Method) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(move |r| r.method == method)
    }

    /// Mean untrustworthy selections per server-round.
    pub fn mean_untrusted(&self, method: Method) -> f64 {
        let (sum, n) = self
            .rows_for(method)
            .fold((0usize, 0usize), |(s, n), r| (s + r.untrusted_selected, n + 1));
        if n == 0 {
            0.0
        } else {
            sum as f64 / n as f64
        }
    }

    /// Accuracy after the last round, averaged over servers.
    pub fn final_accuracy(&self, method: Method) -> f64 {
        let last = self.rows_for(method).map(|r| r.round).max().unwrap_or(0);
        let accs: Vec<f64> = self
            .rows_for(method)
            .filter(|r| r.round == last)
            .map(|r| r.accuracy)
            .collect();
        if accs.is_empty() {
            0.0
        } else {
            accs.iter().sum::<f64>() / accs.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSummary {
    pub device_id: DeviceId,
    pub joined: usize,
    pub untrustworthy: bool,
    /// Resource trust after the last round.
    pub trust: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub metrics: MetricsLog,
    /// Blocking pairs of the trust-method matching, per round.
    pub blocking_pairs: Vec<usize>,
    /// Each device's credibility scores for its peers.
    pub ledgers: BTreeMap<DeviceId, CredibilityLedger<DeviceId>>,
    pub devices: Vec<DeviceSummary>,
}

const STREAM_SETUP: u64 = 1;
const STREAM_HISTORY: u64 = 2;
const STREAM_TRACE: u64 = 3;
const STREAM_VANILLA: u64 = 4;
const STREAM_TRAIN: u64 = 5;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one role of the simulation.
pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mixed = parts.iter().fold(splitmix(seed), |acc, &p| splitmix(acc ^ p));
    ChaCha8Rng::seed_from_u64(mixed)
}

struct Device {
    profile: ClientProfile,
    home: String,
    recommender: Recommender<DeviceId>,
    traces: Vec<ResourceTrace>,
    ledger: CredibilityLedger<DeviceId>,
    decisions: BTreeMap<ServerId, TrustDecision>,
    trust: f64,
}

impl Device {
    fn id(&self) -> DeviceId {
        self.profile.device_id
    }

    /// Traces truncated to the rounds the device has been active for.
    fn observed(&self, round: usize) -> Vec<ResourceTrace> {
        let seen = round + 1 - self.profile.joined;
        self.traces
            .iter()
            .map(|t| ResourceTrace {
                samples: t.samples[..seen].to_vec(),
                ..t.clone()
            })
            .collect()
    }
}

/// Runs every round for both methods.
///
/// `initial_ledgers` seeds the credibility scores of devices present in it.
pub fn run_experiment(
    config: &SimConfig,
    data: &DataSplit,
    initial_ledgers: Option<&BTreeMap<DeviceId, CredibilityLedger<DeviceId>>>,
) -> Result<SimOutcome> {
    config.validate()?;
    if data.train.dim() != data.test.dim() || data.train.classes() != data.test.classes() {
        return Err(Error::Config(
            "training and test data have different shapes".into(),
        ));
    }
    if config.partition.labels_max > data.train.classes() {
        return Err(Error::Config(format!(
            "clients cannot hold {} labels of a {}-class dataset",
            config.partition.labels_max,
            data.train.classes()
        )));
    }
    let (mut devices, fences) = setup_devices(config, data, initial_ledgers)?;
    let servers: Vec<ServerId> = (0..config.n_servers as u32).map(ServerId).collect();
    let quotas: BTreeMap<ServerId, usize> = servers.iter().map(|&s| (s, config.quota)).collect();
    let shape = ModelShape {
        inputs: data.train.dim(),
        classes: data.train.classes(),
    };
    let mut models: BTreeMap<(Method, ServerId), ModelWeights> = Method::ALL
        .iter()
        .flat_map(|&m| servers.iter().map(move |&s| (m, s)))
        .map(|k| (k, ModelWeights::zeros(shape)))
        .collect();
    let mut metrics = MetricsLog::default();
    let mut blocking = Vec::with_capacity(config.rounds);

    for round in 1..=config.rounds {
        let active: Vec<usize> = (0..devices.len())
            .filter(|&i| devices[i].profile.joined <= round)
            .collect();

        // Servers score devices from what they have observed so far.
        for &i in &active {
            let traces = devices[i].observed(round);
            devices[i].trust = assess_device(devices[i].id(), &traces, &fences).0.score;
        }

        bootstrap_round(config, &mut devices, &active, &servers)?;

        let mut selections: BTreeMap<(Method, ServerId), Vec<usize>> = BTreeMap::new();
        let by_id: BTreeMap<DeviceId, usize> = active.iter().map(|&i| (devices[i].id(), i)).collect();

        let device_prefs: Vec<_> = active
            .iter()
            .map(|&i| {
                let d = &devices[i];
                let trusted: BTreeMap<ServerId, f64> = d
                    .decisions
                    .iter()
                    .filter(|(_, dec)| dec.trustworthy)
                    .map(|(&s, dec)| (s, dec.server_trust))
                    .collect();
                build_device_preferences(d.id(), &trusted)
            })
            .collect();
        let device_trust: BTreeMap<DeviceId, f64> =
            active.iter().map(|&i| (devices[i].id(), devices[i].trust)).collect();
        let server_prefs: Vec<_> = servers
            .iter()
            .map(|&s| build_server_preferences(s, &device_trust))
            .collect();
        let matching = run_matching(&device_prefs, &server_prefs, &quotas)?;
        blocking.push(find_blocking_pairs(&matching, &device_prefs, &server_prefs, &quotas).len());
        for &s in &servers {
            let chosen = matching.devices_of(&s).map(|d| by_id[d]).collect();
            selections.insert((Method::Trust, s), chosen);
        }

        for &s in &servers {
            let mut rng = stream(config.seed, &[STREAM_VANILLA, round as u64, u64::from(s.0)]);
            let k = config.quota.min(active.len());
            let mut chosen: Vec<usize> = sample(&mut rng, active.len(), k)
                .into_iter()
                .map(|j| active[j])
                .collect();
            chosen.sort_unstable();
            selections.insert((Method::Vanilla, s), chosen);
        }

        let jobs: Vec<((Method, ServerId), usize)> = selections
            .iter()
            .flat_map(|(&key, chosen)| chosen.iter().map(move |&i| (key, i)))
            .collect();
        let updates: Vec<Result<ModelWeights>> = jobs
            .par_iter()
            .map(|&((method, s), i)| {
                let d = &devices[i];
                let mut rng = stream(
                    config.seed,
                    &[
                        STREAM_TRAIN,
                        round as u64,
                        method as u64,
                        u64::from(s.0),
                        u64::from(d.id().0),
                    ],
                );
                local_train(&models[&(method, s)], &data.train, &d.profile, &config.train, &mut rng)
            })
            .collect();
        let mut grouped: BTreeMap<(Method, ServerId), Vec<(ModelWeights, usize)>> = BTreeMap::new();
        for ((key, i), update) in jobs.iter().zip(updates) {
            grouped
                .entry(*key)
                .or_default()
                .push((update?, devices[*i].profile.partition.len()));
        }
        for (key, ups) in grouped {
            models.insert(key, fedavg(&ups)?);
        }

        for &s in &servers {
            for method in Method::ALL {
                let chosen = &selections[&(method, s)];
                metrics.rows.push(MetricsRow {
                    round,
                    server: s,
                    method,
                    accuracy: evaluate(&models[&(method, s)], &data.test)?,
                    untrusted_selected: chosen
                        .iter()
                        .filter(|&&i| devices[i].profile.is_untrustworthy())
                        .count(),
                    selected: chosen.iter().map(|&i| devices[i].id()).collect(),
                });
            }
        }
    }

    Ok(SimOutcome {
        metrics,
        blocking_pairs: blocking,
        ledgers: devices.iter().map(|d| (d.id(), d.ledger.clone())).collect(),
        devices: devices
            .iter()
            .map(|d| DeviceSummary {
                device_id: d.id(),
                joined: d.profile.joined,
                untrustworthy: d.profile.is_untrustworthy(),
                trust: d.trust,
            })
            .collect(),
    })
}

fn setup_devices(
    config: &SimConfig,
    data: &DataSplit,
    initial_ledgers: Option<&BTreeMap<DeviceId, CredibilityLedger<DeviceId>>>,
) -> Result<(Vec<Device>, BTreeMap<ResourceFeature, Fences>)> {
    let total = config.total_devices();
    let mut rng = stream(config.seed, &[STREAM_SETUP]);
    let partitions = partition_dataset(&data.train, total, &config.partition, &mut rng)?;

    // Exact untrustworthy count per cohort, at random positions within it.
    let mut cohorts = vec![(1usize, config.n_devices)];
    cohorts.extend((2..=config.rounds).map(|r| (r, config.new_devices_per_round)));
    let mut joined = Vec::with_capacity(total);
    let mut untrusted = Vec::with_capacity(total);
    for &(round, size) in &cohorts {
        let bad = (config.untrustworthy_fraction * size as f64).round() as usize;
        let mut flags: Vec<bool> = (0..size).map(|i| i < bad).collect();
        flags.shuffle(&mut rng);
        joined.extend(std::iter::repeat_n(round, size));
        untrusted.extend(flags);
    }

    let mut world = World::generate(
        config.n_servers as u32,
        config.background_servers,
        0.5,
        &mut rng,
    );
    for s in 0..config.n_servers as u32 {
        world.servers.push(ServerProfile {
            id: ServerId(s),
            location: random_location(&mut rng).to_string(),
            trustworthy: true,
        });
    }

    let profiles: Vec<ClientProfile> = partitions
        .into_iter()
        .enumerate()
        .map(|(i, partition)| ClientProfile {
            device_id: DeviceId(i as u32),
            partition,
            capacities: config.capacity.sample(&mut rng),
            behaviors: if untrusted[i] {
                config.adversary.clone()
            } else {
                Vec::new()
            },
            joined: joined[i],
        })
        .collect();
    let homes: Vec<&str> = (0..total).map(|_| random_location(&mut rng)).collect();

    let honest_initial = profiles
        .iter()
        .filter(|p| p.joined == 1 && !p.is_untrustworthy())
        .count();
    // Reference utilization comes from the honest devices present at the start.
    let mut ref_rng = stream(config.seed, &[STREAM_TRACE, u64::MAX]);
    let fences = reference_fences(&reference_samples(
        &config.demand,
        honest_initial,
        8,
        &mut ref_rng,
    ))?;

    let devices = profiles
        .into_iter()
        .zip(homes)
        .map(|(profile, home)| {
            let id = profile.device_id;
            let mut hrng = stream(config.seed, &[STREAM_HISTORY, u64::from(id.0)]);
            let history = generate_history(&world, home, &config.history, &mut hrng)?;
            let dishonest = config.dishonest_recommenders && profile.is_untrustworthy();
            let recommender = Recommender::from_history(id, &history, dishonest)?;
            let mut trng = stream(config.seed, &[STREAM_TRACE, u64::from(id.0)]);
            let span = config.rounds + 1 - profile.joined;
            let traces = generate_resource_trace(&profile, &fences, span, &mut trng)?;
            let ledger = initial_ledgers
                .and_then(|l| l.get(&id).cloned())
                .unwrap_or_else(|| CredibilityLedger::new(DEFAULT_CREDIBILITY));
            Ok(Device {
                profile,
                home: home.to_string(),
                recommender,
                traces,
                ledger,
                decisions: BTreeMap::new(),
                trust: 1.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((devices, fences))
}

/// Each active device bootstraps every federation server it has not
/// decided on yet, asking all other active devices. Total conflict leaves
/// the server undecided until the next round.
fn bootstrap_round(
    config: &SimConfig,
    devices: &mut [Device],
    active: &[usize],
    servers: &[ServerId],
) -> Result<()> {
    for &i in active {
        for &s in servers {
            if devices[i].decisions.contains_key(&s) {
                continue;
            }
            let peers: Vec<Recommender<DeviceId>> = active
                .iter()
                .filter(|&&j| j != i)
                .map(|&j| devices[j].recommender.clone())
                .collect();
            if peers.is_empty() {
                continue;
            }
            let refs: Vec<&Recommender<DeviceId>> = peers.iter().collect();
            let query = InteractionRecord::query(s.to_string(), devices[i].home.clone());
            let d = &mut devices[i];
            match bootstrap_server(&mut d.ledger, &refs, &query, config.max_source_mass) {
                Ok(out) => {
                    d.decisions.insert(s, out.decision);
                }
                Err(Error::EvidenceConflict) => {}
                Err(e) => return Err(e),
            }
        }
    }
    Ok(())
}
