//! Device trust from resource-utilization traces.
//!
//! A server holds a small reference sample of utilization per feature taken
//! from well-behaved clients, derives Tukey fences from its quartiles, and
//! scores each device by how far its over- and under-use samples sit from
//! those fences.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::DeviceId;

const FENCE_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResourceFeature {
    /// Megabytes.
    Ram,
    /// Million instructions per second.
    Cpu,
    /// Megabits per second.
    Bandwidth,
}

impl ResourceFeature {
    pub const ALL: [ResourceFeature; 3] = [
        ResourceFeature::Ram,
        ResourceFeature::Cpu,
        ResourceFeature::Bandwidth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ResourceFeature::Ram => "ram",
            ResourceFeature::Cpu => "cpu",
            ResourceFeature::Bandwidth => "bandwidth",
        }
    }
}

impl fmt::Display for ResourceFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ResourceFeature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ram" => Ok(ResourceFeature::Ram),
            "cpu" => Ok(ResourceFeature::Cpu),
            "bandwidth" | "bw" => Ok(ResourceFeature::Bandwidth),
            other => Err(Error::invalid(format!("unknown resource feature {other:?}"))),
        }
    }
}

/// Utilization values observed on trusted clients for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSample {
    pub feature: ResourceFeature,
    pub values: Vec<f64>,
}

impl ReferenceSample {
    pub fn new(feature: ResourceFeature, values: Vec<f64>) -> Self {
        Self { feature, values }
    }
}

/// Per-round utilization of one feature on one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceTrace {
    pub device_id: DeviceId,
    pub feature: ResourceFeature,
    pub samples: Vec<f64>,
}

impl ResourceTrace {
    pub fn new(device_id: DeviceId, feature: ResourceFeature, samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid(format!(
                "{device_id}: empty {feature} trace"
            )));
        }
        if let Some(bad) = samples.iter().find(|x| !x.is_finite() || **x < 0.0) {
            return Err(Error::invalid(format!(
                "{device_id}: {feature} trace holds invalid utilization {bad}"
            )));
        }
        Ok(Self {
            device_id,
            feature,
            samples,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fences {
    pub q1: f64,
    pub q2: f64,
    pub q3: f64,
    pub iqr: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Fences {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lower && x <= self.upper
    }
}

/// Over/under-use statistics of one device for one feature.
///
/// Ratios are `None` when the corresponding branch never fired.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureAnomaly {
    pub feature: ResourceFeature,
    pub over_total: f64,
    pub under_total: f64,
    pub over_count: u32,
    pub under_count: u32,
    pub over_avg: Option<f64>,
    pub under_avg: Option<f64>,
    /// `upper / over_avg`, in (0, 1].
    pub over_ratio: Option<f64>,
    /// `under_avg / lower`, in [0, 1).
    pub under_ratio: Option<f64>,
}

impl FeatureAnomaly {
    pub fn clean(feature: ResourceFeature) -> Self {
        Self {
            feature,
            over_total: 0.0,
            under_total: 0.0,
            over_count: 0,
            under_count: 0,
            over_avg: None,
            under_avg: None,
            over_ratio: None,
            under_ratio: None,
        }
    }

    pub fn is_clean(&self) -> bool {
        self.over_ratio.is_none() && self.under_ratio.is_none()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceTrust {
    pub device_id: DeviceId,
    pub score: f64,
}

/// Quartiles and Tukey fences of a reference sample.
///
/// Quartiles interpolate linearly at fractional rank `(n - 1) * p` of the
/// sorted values.
pub fn compute_fences(sample: &ReferenceSample) -> Result<Fences> {
    if sample.values.len() < 4 {
        return Err(Error::invalid(format!(
            "reference sample for {} needs at least 4 values, got {}",
            sample.feature,
            sample.values.len()
        )));
    }
    if sample.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "reference sample for {} contains non-finite values",
            sample.feature
        )));
    }
    let mut sorted = sample.values.clone();
    sorted.sort_by(f64::total_cmp);

    let q1 = quantile_sorted(&sorted, 0.25);
    let q2 = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok(Fences {
        q1,
        q2,
        q3,
        iqr,
        lower: q1 - FENCE_FACTOR * iqr,
        upper: q3 + FENCE_FACTOR * iqr,
    })
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = (sorted.len() - 1) as f64 * p;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Fences for every feature that has a reference sample.
pub fn reference_fences(
    samples: &[ReferenceSample],
) -> Result<BTreeMap<ResourceFeature, Fences>> {
    samples
        .iter()
        .map(|s| Ok((s.feature, compute_fences(s)?)))
        .collect()
}

pub fn score_feature(trace: &ResourceTrace, fences: &Fences) -> FeatureAnomaly {
    let mut out = FeatureAnomaly::clean(trace.feature);
    for &x in &trace.samples {
        if x > fences.upper {
            out.over_total += x;
            out.over_count += 1;
        } else if x < fences.lower {
            out.under_total += x;
            out.under_count += 1;
        }
    }
    if out.over_count > 0 {
        let avg = out.over_total / f64::from(out.over_count);
        out.over_avg = Some(avg);
        out.over_ratio = Some(fences.upper / avg);
    }
    if out.under_count > 0 {
        let avg = out.under_total / f64::from(out.under_count);
        out.under_avg = Some(avg);
        // A non-positive lower fence cannot be undercut by valid utilization.
        if fences.lower > 0.0 {
            out.under_ratio = Some(avg / fences.lower);
        }
    }
    out
}

/// Combines per-feature anomalies into a device score in [0, 1].
///
/// Each defined ratio contributes to the numerator and counts once in the
/// denominator. Devices with no anomaly on any feature score 1.0.
pub fn device_trust(device_id: DeviceId, anomalies: &[FeatureAnomaly]) -> DeviceTrust {
    let mut sum = 0.0;
    let mut flagged = 0u32;
    for a in anomalies {
        if let Some(r) = a.over_ratio {
            sum += r;
            flagged += 1;
        }
        if let Some(r) = a.under_ratio {
            sum += r;
            flagged += 1;
        }
    }
    let score = if flagged == 0 {
        1.0
    } else {
        (sum / f64::from(flagged)).clamp(0.0, 1.0)
    };
    DeviceTrust { device_id, score }
}

/// Scores every trace of one device against the given fences.
///
/// Traces for features without fences are ignored.
pub fn assess_device(
    device_id: DeviceId,
    traces: &[ResourceTrace],
    fences: &BTreeMap<ResourceFeature, Fences>,
) -> (DeviceTrust, Vec<FeatureAnomaly>) {
    let anomalies: Vec<_> = traces
        .iter()
        .filter_map(|t| fences.get(&t.feature).map(|f| score_feature(t, f)))
        .collect();
    (device_trust(device_id, &anomalies), anomalies)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(values: &[f64]) -> ReferenceSample {
        ReferenceSample::new(ResourceFeature::Cpu, values.to_vec())
    }

    fn trace(values: &[f64]) -> ResourceTrace {
        ResourceTrace::new(DeviceId(0), ResourceFeature::Cpu, values.to_vec()).unwrap()
    }

    fn fences(lower: f64, upper: f64) -> Fences {
        Fences {
            q1: lower,
            q2: lower,
            q3: upper,
            iqr: upper - lower,
            lower,
            upper,
        }
    }

    // Independent quartile: position-based interpolation written out directly.
    fn naive_quartile(values: &[f64], p: f64) -> f64 {
        let mut v = values.to_vec();
        // insertion sort keeps this independent of the library's sort path
        for i in 1..v.len() {
            let mut j = i;
            while j > 0 && v[j - 1] > v[j] {
                v.swap(j - 1, j);
                j -= 1;
            }
        }
        let h = (v.len() as f64 - 1.0) * p;
        let below = h as usize;
        if below + 1 >= v.len() {
            return v[below];
        }
        v[below] * (1.0 - (h - below as f64)) + v[below + 1] * (h - below as f64)
    }

    #[test]
    fn fences_of_eight_values() {
        let f = compute_fences(&sample(&[10., 20., 30., 40., 50., 60., 70., 80.])).unwrap();
        assert_eq!(naive_quartile(&[10., 20., 30., 40., 50., 60., 70., 80.], 0.25), 27.5);
        assert!((f.q1 - 27.5).abs() < 1e-12);
        assert!((f.q2 - 45.0).abs() < 1e-12);
        assert!((f.q3 - 62.5).abs() < 1e-12);
        assert!((f.iqr - 35.0).abs() < 1e-12);
        assert!((f.lower + 25.0).abs() < 1e-12);
        assert!((f.upper - 115.0).abs() < 1e-12);
    }

    #[test]
    fn fences_of_constant_sample() {
        let f = compute_fences(&sample(&[5., 5., 5., 5.])).unwrap();
        assert_eq!((f.q1, f.q3, f.iqr, f.lower, f.upper), (5., 5., 0., 5., 5.));
    }

    #[test]
    fn fences_of_one_to_four() {
        let f = compute_fences(&sample(&[4., 2., 1., 3.])).unwrap();
        assert!((f.q1 - 1.75).abs() < 1e-12);
        assert!((f.q3 - 3.25).abs() < 1e-12);
        assert!((f.iqr - 1.5).abs() < 1e-12);
        assert!((f.lower + 0.5).abs() < 1e-12);
        assert!((f.upper - 5.5).abs() < 1e-12);
    }

    #[test]
    fn short_sample_names_feature() {
        let err = compute_fences(&ReferenceSample::new(ResourceFeature::Ram, vec![1., 2., 3.]))
            .unwrap_err();
        assert!(err.to_string().contains("ram"), "{err}");
    }

    #[test]
    fn overuse_trace() {
        let a = score_feature(&trace(&[200., 300.]), &fences(-25., 115.));
        assert_eq!(a.over_total, 500.);
        assert_eq!(a.over_count, 2);
        assert_eq!(a.over_avg, Some(250.));
        assert!((a.over_ratio.unwrap() - 0.46).abs() < 1e-12);
        assert_eq!(a.under_count, 0);
        assert_eq!(a.under_ratio, None);
    }

    #[test]
    fn trace_inside_fences_is_clean() {
        let a = score_feature(&trace(&[20., 50., 100., 115.]), &fences(-25., 115.));
        assert!(a.is_clean());
        assert_eq!((a.over_count, a.under_count), (0, 0));
    }

    #[test]
    fn underuse_trace() {
        let a = score_feature(&trace(&[2., 2.]), &fences(10., 100.));
        assert_eq!(a.under_total, 4.);
        assert_eq!(a.under_count, 2);
        assert_eq!(a.under_avg, Some(2.));
        assert!((a.under_ratio.unwrap() - 0.2).abs() < 1e-12);
        assert_eq!(a.over_count, 0);
    }

    #[test]
    fn underuse_needs_positive_lower_fence() {
        // Zero utilization can't sit below a zero fence; nothing is flagged.
        let a = score_feature(&trace(&[0., 0.]), &fences(0., 10.));
        assert!(a.is_clean());
    }

    #[test]
    fn device_trust_examples() {
        let mut over = FeatureAnomaly::clean(ResourceFeature::Ram);
        over.over_ratio = Some(0.46);
        assert!((device_trust(DeviceId(1), &[over]).score - 0.46).abs() < 1e-12);

        let clean: Vec<_> = ResourceFeature::ALL
            .iter()
            .map(|&f| FeatureAnomaly::clean(f))
            .collect();
        assert_eq!(device_trust(DeviceId(1), &clean).score, 1.0);

        let mut a = FeatureAnomaly::clean(ResourceFeature::Ram);
        a.over_ratio = Some(0.5);
        let mut b = FeatureAnomaly::clean(ResourceFeature::Cpu);
        b.under_ratio = Some(0.3);
        assert!((device_trust(DeviceId(1), &[a, b]).score - 0.4).abs() < 1e-12);
    }

    #[test]
    fn trace_rejects_negative_utilization() {
        assert!(ResourceTrace::new(DeviceId(0), ResourceFeature::Cpu, vec![1.0, -1.0]).is_err());
        assert!(ResourceTrace::new(DeviceId(0), ResourceFeature::Cpu, vec![]).is_err());
    }

    proptest! {
        #[test]
        fn fences_are_ordered(values in prop::collection::vec(0.0f64..1e4, 4..64)) {
            let f = compute_fences(&sample(&values)).unwrap();
            prop_assert!(f.lower <= f.q1 && f.q1 <= f.q2 && f.q2 <= f.q3 && f.q3 <= f.upper);
            prop_assert!(f.iqr >= 0.0);
        }

        #[test]
        fn trust_is_bounded(
            reference in prop::collection::vec(1.0f64..100.0, 4..20),
            samples in prop::collection::vec(0.0f64..1000.0, 1..30),
        ) {
            let f = compute_fences(&sample(&reference)).unwrap();
            let a = score_feature(&trace(&samples), &f);
            let t = device_trust(DeviceId(0), &[a]);
            prop_assert!((0.0..=1.0).contains(&t.score));
        }

        #[test]
        fn raising_overuse_lowers_ratio(
            samples in prop::collection::vec(200.0f64..1000.0, 1..10),
            bump in 0.1f64..100.0,
        ) {
            let f = fences(-25., 115.);
            let before = score_feature(&trace(&samples), &f);
            let raised: Vec<f64> = samples.iter().map(|x| x + bump).collect();
            let after = score_feature(&trace(&raised), &f);
            prop_assert_eq!(before.over_count, after.over_count);
            prop_assert!(after.over_avg.unwrap() > before.over_avg.unwrap());
            prop_assert!(after.over_ratio.unwrap() < before.over_ratio.unwrap());
            prop_assert!(
                device_trust(DeviceId(0), &[after]).score
                    <= device_trust(DeviceId(0), &[before]).score
            );
        }
    }
}
