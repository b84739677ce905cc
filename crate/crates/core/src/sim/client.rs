//! Simulated client devices: behaviours, local training and resource traces.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::DeviceId;
use crate::resource_trust::{Fences, ReferenceSample, ResourceFeature, ResourceTrace};
use crate::sim::data::{Dataset, Partition};
use crate::sim::model::{sgd, ModelWeights, TrainParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorKind {
    Honest,
    /// Trains on permuted labels; intensity is the fraction of rows flipped.
    LabelFlip,
    /// Adds Gaussian noise with standard deviation `intensity` to its update.
    RandomWeights,
    /// Consumes `intensity` times the normal resource load.
    ResourceOveruse,
    /// Consumes `1 / intensity` of the normal resource load.
    ResourceUnderuse,
}

impl fmt::Display for BehaviorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BehaviorKind::Honest => "honest",
            BehaviorKind::LabelFlip => "label_flip",
            BehaviorKind::RandomWeights => "random_weights",
            BehaviorKind::ResourceOveruse => "resource_overuse",
            BehaviorKind::ResourceUnderuse => "resource_underuse",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryBehavior {
    pub kind: BehaviorKind,
    pub intensity: f64,
}

impl AdversaryBehavior {
    pub const HONEST: AdversaryBehavior = AdversaryBehavior {
        kind: BehaviorKind::Honest,
        intensity: 1.0,
    };

    pub fn new(kind: BehaviorKind, intensity: f64) -> Result<Self> {
        let ok = match kind {
            BehaviorKind::Honest => intensity == 1.0,
            BehaviorKind::LabelFlip => intensity > 0.0 && intensity <= 1.0,
            BehaviorKind::RandomWeights => intensity > 0.0 && intensity.is_finite(),
            BehaviorKind::ResourceOveruse | BehaviorKind::ResourceUnderuse => {
                intensity >= 2.0 && intensity.is_finite()
            }
        };
        if !ok {
            return Err(Error::invalid(format!(
                "intensity {intensity} is not valid for {kind}"
            )));
        }
        Ok(Self { kind, intensity })
    }
}

/// Maximum resources a device can offer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capacities {
    pub ram_mb: f64,
    pub cpu_mips: f64,
    pub bandwidth_mbps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile {
    pub device_id: DeviceId,
    pub partition: Partition,
    pub capacities: Capacities,
    /// Empty for honest devices. An adversary may combine a training attack
    /// with a resource signature.
    pub behaviors: Vec<AdversaryBehavior>,
    /// Round the device joined (1-based).
    pub joined: usize,
}

impl ClientProfile {
    pub fn is_untrustworthy(&self) -> bool {
        self.behaviors.iter().any(|b| b.kind != BehaviorKind::Honest)
    }

    pub fn behavior(&self, kind: BehaviorKind) -> Option<&AdversaryBehavior> {
        self.behaviors.iter().find(|b| b.kind == kind)
    }
}

/// Maps each class to a different one; never a fixed point for `classes > 1`.
pub fn flip_label(label: usize, classes: usize) -> usize {
    let flipped = classes - 1 - label;
    if flipped == label {
        (label + 1) % classes
    } else {
        flipped
    }
}

/// One client's local update starting from the server's model.
pub fn local_train<R: Rng + ?Sized>(
    weights: &ModelWeights,
    data: &Dataset,
    profile: &ClientProfile,
    params: &TrainParams,
    rng: &mut R,
) -> Result<ModelWeights> {
    let rows = &profile.partition.rows;
    let mut labels: Vec<usize> = rows.iter().map(|&r| data.label(r)).collect();
    if let Some(flip) = profile.behavior(BehaviorKind::LabelFlip) {
        let count = ((flip.intensity * rows.len() as f64).round() as usize).min(rows.len());
        for i in sample(rng, rows.len(), count) {
            labels[i] = flip_label(labels[i], data.classes());
        }
    }
    let mut out = sgd(weights, data, rows, &labels, params, rng);
    if let Some(noise) = profile.behavior(BehaviorKind::RandomWeights) {
        for v in &mut out.values {
            let z: f64 = StandardNormal.sample(rng);
            *v += noise.intensity * z;
        }
    }
    if !out.is_finite() {
        return Err(Error::TrainingDivergence {
            client: profile.device_id.to_string(),
        });
    }
    Ok(out)
}

/// Nominal per-round demand of the training task, in feature units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskDemand {
    pub ram_mb: f64,
    pub cpu_mips: f64,
    pub bandwidth_mbps: f64,
    /// Honest utilization varies uniformly within `demand * (1 ± spread)`.
    pub spread: f64,
}

impl Default for TaskDemand {
    fn default() -> Self {
        Self {
            ram_mb: 80.0,
            cpu_mips: 40.0,
            bandwidth_mbps: 40.0,
            spread: 0.25,
        }
    }
}

impl TaskDemand {
    pub fn of(&self, feature: ResourceFeature) -> f64 {
        match feature {
            ResourceFeature::Ram => self.ram_mb,
            ResourceFeature::Cpu => self.cpu_mips,
            ResourceFeature::Bandwidth => self.bandwidth_mbps,
        }
    }
}

/// Utilization of honest devices in their first round, one value per
/// device, padded to at least `min_len` values.
pub fn reference_samples<R: Rng + ?Sized>(
    demand: &TaskDemand,
    honest_devices: usize,
    min_len: usize,
    rng: &mut R,
) -> Vec<ReferenceSample> {
    let n = honest_devices.max(min_len).max(4);
    ResourceFeature::ALL
        .iter()
        .map(|&f| {
            let base = demand.of(f);
            let values = (0..n)
                .map(|_| base * rng.random_range(1.0 - demand.spread..=1.0 + demand.spread))
                .collect();
            ReferenceSample::new(f, values)
        })
        .collect()
}

/// One trace per feature covering `rounds` rounds.
///
/// Honest load is uniform within the reference interquartile band; resource
/// behaviours scale it.
pub fn generate_resource_trace<R: Rng + ?Sized>(
    profile: &ClientProfile,
    fences: &BTreeMap<ResourceFeature, Fences>,
    rounds: usize,
    rng: &mut R,
) -> Result<Vec<ResourceTrace>> {
    if rounds == 0 {
        return Err(Error::invalid("a resource trace needs at least one round"));
    }
    let scale = match (
        profile.behavior(BehaviorKind::ResourceOveruse),
        profile.behavior(BehaviorKind::ResourceUnderuse),
    ) {
        (Some(o), _) => o.intensity,
        (None, Some(u)) => 1.0 / u.intensity,
        (None, None) => 1.0,
    };
    fences
        .iter()
        .map(|(&feature, f)| {
            let samples = (0..rounds)
                .map(|_| {
                    let honest = if f.q3 > f.q1 {
                        rng.random_range(f.q1..=f.q3)
                    } else {
                        f.q1
                    };
                    honest * scale
                })
                .collect();
            ResourceTrace::new(profile.device_id, feature, samples)
        })
        .collect()
}
