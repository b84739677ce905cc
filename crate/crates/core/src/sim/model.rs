//! Multinomial logistic regression, trained by mini-batch SGD.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::data::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub inputs: usize,
    pub classes: usize,
}

impl ModelShape {
    pub fn len(&self) -> usize {
        self.classes * (self.inputs + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major `classes x (inputs + 1)`; the last column of each row is the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelWeights {
    pub shape: ModelShape,
    pub values: Vec<f64>,
}

impl ModelWeights {
    pub fn zeros(shape: ModelShape) -> Self {
        Self {
            shape,
            values: vec![0.0; shape.len()],
        }
    }

    pub fn random<R: Rng + ?Sized>(shape: ModelShape, scale: f64, rng: &mut R) -> Self {
        let values = (0..shape.len())
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            })
            .collect::<Vec<f64>>();
        Self { shape, values }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn row(&self, class: usize) -> &[f64] {
        let w = self.shape.inputs + 1;
        &self.values[class * w..(class + 1) * w]
    }

    pub fn logits_into(&self, x: &[f32], out: &mut [f64]) {
        let n = self.shape.inputs;
        for (c, slot) in out.iter_mut().enumerate() {
            let row = self.row(c);
            let mut z = row[n];
            for (w, &xi) in row[..n].iter().zip(x) {
                z += w * f64::from(xi);
            }
            *slot = z;
        }
    }

    pub fn predict(&self, x: &[f32]) -> usize {
        let mut z = vec![0.0; self.shape.classes];
        self.logits_into(x, &mut z);
        argmax(&z)
    }
}

fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Mean cross-entropy over the given rows.
pub fn loss(weights: &ModelWeights, data: &Dataset, rows: &[usize], labels: &[usize]) -> f64 {
    let mut z = vec![0.0; weights.shape.classes];
    let mut total = 0.0;
    for (&i, &y) in rows.iter().zip(labels) {
        weights.logits_into(data.features(i), &mut z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - z[y];
    }
    total / rows.len() as f64
}

/// Gradient of [`loss`] with respect to every weight.
pub fn gradient(
    weights: &ModelWeights,
    data: &Dataset,
    rows: &[usize],
    labels: &[usize],
) -> Vec<f64> {
    let mut grad = vec![0.0; weights.values.len()];
    accumulate_gradient(weights, data, rows, labels, &mut grad);
    let scale = 1.0 / rows.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    grad
}

fn accumulate_gradient(
    weights: &ModelWeights,
    data: &Dataset,
    rows: &[usize],
    labels: &[usize],
    grad: &mut [f64],
) {
    let n = weights.shape.inputs;
    let width = n + 1;
    let mut p = vec![0.0; weights.shape.classes];
    for (&i, &y) in rows.iter().zip(labels) {
        let x = data.features(i);
        weights.logits_into(x, &mut p);
        softmax_in_place(&mut p);
        p[y] -= 1.0;
        for (c, &g) in p.iter().enumerate() {
            let row = &mut grad[c * width..(c + 1) * width];
            for (slot, &xi) in row[..n].iter_mut().zip(x) {
                *slot += g * f64::from(xi);
            }
            row[n] += g;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 2,
            learning_rate: 0.1,
            batch_size: 32,
        }
    }
}

/// Mini-batch SGD over `rows` with the given (possibly poisoned) labels.
pub fn sgd<R: Rng + ?Sized>(
    weights: &ModelWeights,
    data: &Dataset,
    rows: &[usize],
    labels: &[usize],
    params: &TrainParams,
    rng: &mut R,
) -> ModelWeights {
    let mut w = weights.clone();
    if rows.is_empty() || params.epochs == 0 {
        return w;
    }
    let batch = params.batch_size.max(1);
    let mut order: Vec<usize> = (0..rows.len()).collect();
    let mut grad = vec![0.0; w.values.len()];
    let mut batch_rows = Vec::with_capacity(batch);
    let mut batch_labels = Vec::with_capacity(batch);
    for _ in 0..params.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(batch) {
            batch_rows.clear();
            batch_labels.clear();
            for &k in chunk {
                batch_rows.push(rows[k]);
                batch_labels.push(labels[k]);
            }
            grad.iter_mut().for_each(|g| *g = 0.0);
            accumulate_gradient(&w, data, &batch_rows, &batch_labels, &mut grad);
            let step = params.learning_rate / chunk.len() as f64;
            for (v, g) in w.values.iter_mut().zip(&grad) {
                *v -= step * g;
            }
        }
    }
    w
}

/// Fraction of rows whose argmax class matches the label.
pub fn evaluate(weights: &ModelWeights, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("cannot evaluate on an empty test set"));
    }
    if test.dim() != weights.shape.inputs {
        return Err(Error::invalid(format!(
            "test set has {} features, model expects {}",
            test.dim(),
            weights.shape.inputs
        )));
    }
    let mut z = vec![0.0; weights.shape.classes];
    let correct = (0..test.len())
        .filter(|&i| {
            weights.logits_into(test.features(i), &mut z);
            argmax(&z) == test.label(i)
        })
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// Sample-count-weighted coordinate-wise mean of client models.
pub fn fedavg(updates: &[(ModelWeights, usize)]) -> Result<ModelWeights> {
    let (first, _) = updates
        .first()
        .ok_or_else(|| Error::Aggregation("no client updates to aggregate".into()))?;
    let shape = first.shape;
    if let Some((bad, _)) = updates.iter().find(|(w, _)| w.shape != shape) {
        return Err(Error::Aggregation(format!(
            "shape mismatch: {:?} vs {:?}",
            bad.shape, shape
        )));
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::Aggregation("client updates carry no samples".into()));
    }
    let mut values = vec![0.0; shape.len()];
    for (w, n) in updates {
        let share = *n as f64 / total as f64;
        for (acc, v) in values.iter_mut().zip(&w.values) {
            *acc += share * v;
        }
    }
    Ok(ModelWeights { shape, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::data::Dataset;
    use proptest::prelude::{prop, prop_assert, proptest};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(inputs: usize, classes: usize) -> ModelShape {
        ModelShape { inputs, classes }
    }

    #[test]
    fn fedavg_weighted_mean() {
        let s = shape(0, 1);
        let a = ModelWeights { shape: s, values: vec![1.0] };
        let b = ModelWeights { shape: s, values: vec![3.0] };
        let out = fedavg(&[(a, 1), (b, 3)]).unwrap();
        assert_eq!(out.values, vec![2.5]);
    }

    #[test]
    fn fedavg_identical_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = ModelWeights::random(shape(4, 3), 1.0, &mut rng);
        let out = fedavg(&[(w.clone(), 10), (w.clone(), 30), (w.clone(), 7)]).unwrap();
        for (a, b) in out.values.iter().zip(&w.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fedavg_errors() {
        assert!(fedavg(&[]).is_err());
        let a = ModelWeights::zeros(shape(2, 2));
        let b = ModelWeights::zeros(shape(3, 2));
        assert!(matches!(fedavg(&[(a, 1), (b, 1)]), Err(Error::Aggregation(_))));
    }

    #[test]
    fn zero_epochs_is_identity() {
        let data = Dataset::new(2, 2, vec![0.0, 1.0, 1.0, 0.0], vec![0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = ModelWeights::random(shape(2, 2), 0.5, &mut rng);
        let params = TrainParams { epochs: 0, learning_rate: 0.1, batch_size: 2 };
        assert_eq!(sgd(&w, &data, &[0, 1], &[0, 1], &params, &mut rng), w);
    }

    #[test]
    fn separable_toy_set_is_learned() {
        // Two clusters on either side of x0 = 0.5.
        let points = [
            (0.1, 0.2, 0), (0.2, 0.9, 0), (0.3, 0.5, 0), (0.05, 0.6, 0),
            (0.9, 0.1, 1), (0.8, 0.8, 1), (0.7, 0.4, 1), (0.95, 0.6, 1),
        ];
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (a, b, y) in points {
            xs.extend([a as f32, b as f32]);
            ys.push(y);
        }
        let data = Dataset::new(2, 2, xs, ys.clone()).unwrap();
        let rows: Vec<usize> = (0..8).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let params = TrainParams { epochs: 50, learning_rate: 1.0, batch_size: 4 };
        let w = sgd(&ModelWeights::zeros(shape(2, 2)), &data, &rows, &ys, &params, &mut rng);
        assert_eq!(evaluate(&w, &data).unwrap(), 1.0);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (dim, classes, n) = (5, 3, 9);
        let xs: Vec<f32> = (0..dim * n).map(|_| rng.random_range(0.0..1.0)).collect();
        let ys: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let data = Dataset::new(dim, classes, xs, ys.clone()).unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let w = ModelWeights::random(shape(dim, classes), 0.7, &mut rng);
        let g = gradient(&w, &data, &rows, &ys);
        let h = 1e-5;
        for k in 0..w.values.len() {
            let mut p = w.clone();
            p.values[k] += h;
            let mut m = w.clone();
            m.values[k] -= h;
            let fd = (loss(&p, &data, &rows, &ys) - loss(&m, &data, &rows, &ys)) / (2.0 * h);
            let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs()).max(1e-8);
            assert!(rel < 1e-4, "weight {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn random_weights_score_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 1000;
        let xs: Vec<f32> = (0..n * 20).map(|_| rng.random_range(0.0..1.0)).collect();
        let ys: Vec<usize> = (0..n).map(|i| i % 10).collect();
        let data = Dataset::new(20, 10, xs, ys).unwrap();
        let w = ModelWeights::random(shape(20, 10), 1.0, &mut rng);
        let acc = evaluate(&w, &data).unwrap();
        assert!((acc - 0.1).abs() <= 0.05, "{acc}");
    }

    #[test]
    fn fedavg_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = shape(4, 1);
        let ups: Vec<(ModelWeights, usize)> =
            (0..3).map(|i| (ModelWeights::random(s, 1.0, &mut rng), 5 + i * 11)).collect();
        let out = fedavg(&ups).unwrap();
        let total: f64 = ups.iter().map(|(_, n)| *n as f64).sum();
        for k in 0..s.len() {
            let direct: f64 = ups.iter().map(|(w, n)| w.values[k] * *n as f64).sum::<f64>() / total;
            assert!((out.values[k] - direct).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn fedavg_stays_in_convex_hull(
            updates in prop::collection::vec(
                (prop::collection::vec(-10.0f64..10.0, 3), 1usize..50), 1..6)
        ) {
            let s = shape(2, 1);
            let ups: Vec<(ModelWeights, usize)> = updates
                .iter()
                .map(|(v, n)| (ModelWeights { shape: s, values: v.clone() }, *n))
                .collect();
            let out = fedavg(&ups).unwrap();
            for k in 0..3 {
                let lo = ups.iter().map(|(w, _)| w.values[k]).fold(f64::INFINITY, f64::min);
                let hi = ups.iter().map(|(w, _)| w.values[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.values[k] >= lo - 1e-9 && out.values[k] <= hi + 1e-9);
            }
        }
    }

    #[test]
    fn empty_test_set_rejected() {
        let data = Dataset::new(2, 2, vec![], vec![]).unwrap();
        assert!(evaluate(&ModelWeights::zeros(shape(2, 2)), &data).is_err());
    }
}
