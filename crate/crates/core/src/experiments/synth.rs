//! Offline stand-in for handwritten digits: each class is a few Gaussian
//! blobs on a 28x28 canvas, plus pixel noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::data::{DataSplit, Dataset};

pub const SIDE: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub train: usize,
    pub test: usize,
    pub classes: usize,
    /// Standard deviation of per-pixel noise.
    pub noise: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            train: 8000,
            test: 1000,
            classes: 10,
            noise: 0.3,
        }
    }
}

fn prototype<R: Rng + ?Sized>(rng: &mut R) -> Vec<f32> {
    let mut img = vec![0.0f32; SIDE * SIDE];
    for _ in 0..3 {
        let cx = rng.random_range(4.0..24.0f32);
        let cy = rng.random_range(4.0..24.0f32);
        let sigma = rng.random_range(2.0..4.0f32);
        for y in 0..SIDE {
            for x in 0..SIDE {
                let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                let v = &mut img[y * SIDE + x];
                *v = (*v + (-d2 / (2.0 * sigma * sigma)).exp()).min(1.0);
            }
        }
    }
    img
}

/// `n_samples` images with labels cycling through the classes, so the
/// class histogram is balanced to within one.
pub fn synth_dataset(n_samples: usize, n_classes: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n_classes == 0 || n_samples < n_classes {
        return Err(Error::invalid(format!(
            "need at least one sample per class: {n_samples} samples, {n_classes} classes"
        )));
    }
    let noise = Normal::new(0.0, noise.max(0.0))
        .map_err(|e| Error::invalid(format!("noise level: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prototypes: Vec<Vec<f32>> = (0..n_classes).map(|_| prototype(&mut rng)).collect();
    let mut features = Vec::with_capacity(n_samples * SIDE * SIDE);
    let mut labels = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let y = i % n_classes;
        for &p in &prototypes[y] {
            let v = f64::from(p) + noise.sample(&mut rng);
            features.push(v.clamp(0.0, 1.0) as f32);
        }
        labels.push(y);
    }
    Dataset::new(SIDE * SIDE, n_classes, features, labels)
}

/// Train and test sets drawn around the same class prototypes.
pub fn synth_split(spec: &SynthSpec, seed: u64) -> Result<DataSplit> {
    let all = synth_dataset(spec.train + spec.test, spec.classes, spec.noise, seed)?;
    let rows: Vec<usize> = (0..all.len()).collect();
    let (train, test) = rows.split_at(spec.train);
    Ok(DataSplit {
        train: all.subset(train),
        test: all.subset(test),
    })
}
