//! In-memory labelled image data and non-IID client partitioning.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major feature matrix with one class label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    classes: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(dim: usize, classes: usize, features: Vec<f32>, labels: Vec<usize>) -> Result<Self> {
        if features.len() != dim * labels.len() {
            return Err(Error::invalid(format!(
                "{} feature values for {} rows of width {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::invalid(format!("label {bad} outside 0..{classes}")));
        }
        Ok(Self {
            dim,
            classes,
            features,
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self, row: usize) -> &[f32] {
        &self.features[row * self.dim..(row + 1) * self.dim]
    }

    pub fn label(&self, row: usize) -> usize {
        self.labels[row]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows per class.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            features.extend_from_slice(self.features(r));
            labels.push(self.labels[r]);
        }
        Dataset {
            dim: self.dim,
            classes: self.classes,
            features,
            labels,
        }
    }
}

/// Training and held-out evaluation data.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
}

/// Rows of the training set owned by one client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: BTreeSet<usize>,
    pub rows: Vec<usize>,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionSpec {
    pub labels_min: usize,
    pub labels_max: usize,
    pub size_min: usize,
    pub size_max: usize,
}

impl Default for PartitionSpec {
    fn default() -> Self {
        Self {
            labels_min: 3,
            labels_max: 4,
            size_min: 100,
            size_max: 250,
        }
    }
}

/// Splits `data` into label-restricted client shards, without reuse.
///
/// Each client draws a label count in `[labels_min, labels_max]` and takes
/// the least-used labels so far (random among equals), so label coverage
/// stays balanced across consecutive clients. Its size is uniform in
/// `[size_min, size_max]`, spread evenly over its labels.
pub fn partition_dataset<R: Rng + ?Sized>(
    data: &Dataset,
    n_clients: usize,
    spec: &PartitionSpec,
    rng: &mut R,
) -> Result<Vec<Partition>> {
    let classes = data.classes();
    if spec.labels_min == 0 || spec.labels_min > spec.labels_max || spec.labels_max > classes {
        return Err(Error::Config(format!(
            "labels per client must satisfy 1 <= {} <= {} <= {classes}",
            spec.labels_min, spec.labels_max
        )));
    }
    if spec.size_min == 0 || spec.size_min > spec.size_max {
        return Err(Error::Config(format!(
            "partition size range [{}, {}] is empty",
            spec.size_min, spec.size_max
        )));
    }

    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (row, &y) in data.labels().iter().enumerate() {
        pools[y].push(row);
    }
    for pool in &mut pools {
        pool.shuffle(rng);
    }
    let mut usage = vec![0usize; classes];
    let mut out = Vec::with_capacity(n_clients);

    for client in 0..n_clients {
        let k = rng.random_range(spec.labels_min..=spec.labels_max);
        let size = rng.random_range(spec.size_min..=spec.size_max);
        let mut candidates: Vec<usize> = (0..classes).collect();
        candidates.shuffle(rng);
        candidates.sort_by_key(|&c| usage[c]);
        let chosen: BTreeSet<usize> = candidates.into_iter().take(k).collect();

        let mut rows = Vec::with_capacity(size);
        for (i, &label) in chosen.iter().enumerate() {
            usage[label] += 1;
            let want = size / k + usize::from(i < size % k);
            let pool = &mut pools[label];
            if pool.len() < want {
                return Err(Error::Config(format!(
                    "not enough samples of label {label} for client {client}: need {want}, {} left",
                    pool.len()
                )));
            }
            rows.extend(pool.drain(pool.len() - want..));
        }
        rows.sort_unstable();
        out.push(Partition {
            labels: chosen,
            rows,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy(n: usize) -> Dataset {
        let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let features = (0..n).map(|i| i as f32).collect();
        Dataset::new(1, 10, features, labels).unwrap()
    }

    fn small_spec() -> PartitionSpec {
        PartitionSpec { labels_min: 3, labels_max: 4, size_min: 6, size_max: 12 }
    }

    #[test]
    fn deterministic_under_seed() {
        let data = toy(200);
        let a = partition_dataset(&data, 4, &small_spec(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = partition_dataset(&data, 4, &small_spec(), &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn clients_hold_three_or_four_labels_only() {
        let data = toy(200);
        let parts = partition_dataset(&data, 6, &small_spec(), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for p in &parts {
            assert!((3..=4).contains(&p.labels.len()));
            assert!((6..=12).contains(&p.len()));
            assert!(p.rows.iter().all(|&r| p.labels.contains(&data.label(r))));
        }
    }

    #[test]
    fn no_row_is_assigned_twice() {
        let data = toy(200);
        let parts = partition_dataset(&data, 10, &small_spec(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let mut seen = vec![0u8; data.len()];
        for p in &parts {
            for &r in &p.rows {
                seen[r] += 1;
            }
        }
        assert!(seen.iter().all(|&c| c <= 1));
        let total: usize = parts.iter().map(Partition::len).sum();
        assert_eq!(total, seen.iter().filter(|&&c| c == 1).count());
    }

    #[test]
    fn infeasible_request_is_a_config_error() {
        let data = toy(30);
        let spec = PartitionSpec { size_min: 100, size_max: 100, ..small_spec() };
        let err = partition_dataset(&data, 2, &spec, &mut ChaCha8Rng::seed_from_u64(1)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn dataset_shape_checked() {
        assert!(Dataset::new(2, 2, vec![0.0; 3], vec![0, 1]).is_err());
        assert!(Dataset::new(1, 2, vec![0.0; 2], vec![0, 2]).is_err());
    }
}
