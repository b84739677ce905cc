//! Seeded input generators shared by the benchmarks.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fedtrust::resource_trust::{Fences, ReferenceSample, ResourceFeature, ResourceTrace};
use fedtrust::sim::client::Capacities;
use fedtrust::sim::{ClientProfile, Dataset, ModelShape, ModelWeights, Partition};
use fedtrust::{
    build_device_preferences, build_server_preferences, reference_fences, BeliefMass, DeviceId,
    PreferenceList, ServerId,
};

pub const FEATURES: [ResourceFeature; 3] =
    [ResourceFeature::Ram, ResourceFeature::Cpu, ResourceFeature::Bandwidth];

pub struct MatchingInput {
    pub devices: Vec<PreferenceList<DeviceId, ServerId>>,
    pub servers: Vec<PreferenceList<ServerId, DeviceId>>,
    pub quotas: BTreeMap<ServerId, usize>,
}

/// Complete random trust tables between `n_devices` and `n_servers`, with
/// quotas summing to roughly the number of devices.
pub fn matching_input(n_devices: usize, n_servers: usize, seed: u64) -> MatchingInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dids: Vec<DeviceId> = (0..n_devices as u32).map(DeviceId).collect();
    let sids: Vec<ServerId> = (0..n_servers as u32).map(ServerId).collect();
    let devices = dids
        .iter()
        .map(|&d| {
            let t: BTreeMap<_, _> = sids.iter().map(|&s| (s, rng.random::<f64>())).collect();
            build_device_preferences(d, &t)
        })
        .collect();
    let servers = sids
        .iter()
        .map(|&s| {
            let t: BTreeMap<_, _> = dids.iter().map(|&d| (d, rng.random::<f64>())).collect();
            build_server_preferences(s, &t)
        })
        .collect();
    let quota = n_devices.div_ceil(n_servers).max(1);
    let quotas = sids.iter().map(|&s| (s, quota)).collect();
    MatchingInput { devices, servers, quotas }
}

/// Simple support masses of at most 0.5, so up to a few dozen of them
/// combine without the uncertain mass underflowing into total conflict.
pub fn belief_masses(n: usize, seed: u64) -> Vec<BeliefMass> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let lambda = rng.random_range(0.05..0.5);
            if rng.random_bool(0.5) {
                BeliefMass::new(lambda, 0.0, 1.0 - lambda).unwrap()
            } else {
                BeliefMass::new(0.0, lambda, 1.0 - lambda).unwrap()
            }
        })
        .collect()
}

/// Fences from a uniform reference and one trace per feature with
/// occasional outliers on both sides.
pub fn trust_input(
    samples: usize,
    seed: u64,
) -> (BTreeMap<ResourceFeature, Fences>, Vec<ResourceTrace>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference: Vec<ReferenceSample> = FEATURES
        .iter()
        .map(|&f| ReferenceSample::new(f, (0..64).map(|_| rng.random_range(40.0..120.0)).collect()))
        .collect();
    let fences = reference_fences(&reference).unwrap();
    let traces = FEATURES
        .iter()
        .map(|&f| {
            let values = (0..samples)
                .map(|_| match rng.random_range(0..10) {
                    0 => rng.random_range(300.0..600.0),
                    1 => rng.random_range(0.5..5.0),
                    _ => rng.random_range(40.0..120.0),
                })
                .collect();
            ResourceTrace::new(DeviceId(0), f, values).unwrap()
        })
        .collect();
    (fences, traces)
}

/// Random `dim`-dimensional data plus an honest client owning every row.
pub fn training_input(
    rows: usize,
    dim: usize,
    classes: usize,
    seed: u64,
) -> (Dataset, ClientProfile, ModelWeights) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = (0..rows * dim).map(|_| rng.random_range(0.0..1.0)).collect();
    let labels = (0..rows).map(|i| i % classes).collect();
    let data = Dataset::new(dim, classes, features, labels).unwrap();
    let profile = ClientProfile {
        device_id: DeviceId(0),
        partition: Partition {
            labels: (0..classes).collect::<BTreeSet<_>>(),
            rows: (0..rows).collect(),
        },
        capacities: Capacities { ram_mb: 1000.0, cpu_mips: 1000.0, bandwidth_mbps: 1000.0 },
        behaviors: Vec::new(),
        joined: 1,
    };
    let weights = ModelWeights::zeros(ModelShape { inputs: dim, classes });
    (data, profile, weights)
}
