//! Dempster–Shafer combination over {trustworthy, untrustworthy, uncertain}.
//!
//! The frame has two singletons and their union, so a mass function is
//! three numbers. Two masses conflict only when one backs trust and the
//! other distrust.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recommender_tree::{Prediction, TrustStatus};

const MASS_TOLERANCE: f64 = 1e-9;

/// Basic probability assignment of one source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefMass {
    pub trust: f64,
    pub distrust: f64,
    pub uncertain: f64,
}

impl BeliefMass {
    pub const VACUOUS: BeliefMass = BeliefMass {
        trust: 0.0,
        distrust: 0.0,
        uncertain: 1.0,
    };

    pub fn new(trust: f64, distrust: f64, uncertain: f64) -> Result<Self> {
        let m = Self {
            trust,
            distrust,
            uncertain,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.trust, self.distrust, self.uncertain];
        if parts
            .iter()
            .any(|p| !p.is_finite() || *p < -MASS_TOLERANCE || *p > 1.0 + MASS_TOLERANCE)
        {
            return Err(Error::invalid(format!("mass out of [0, 1]: {self:?}")));
        }
        if (self.total() - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::invalid(format!("mass does not sum to 1: {self:?}")));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.trust + self.distrust + self.uncertain
    }
}

/// Combined belief in each hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub t: f64,
    pub n: f64,
    pub u: f64,
}

impl From<BeliefMass> for Belief {
    fn from(m: BeliefMass) -> Self {
        Belief {
            t: m.trust,
            n: m.distrust,
            u: m.uncertain,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustDecision {
    pub trustworthy: bool,
    /// Belief in trustworthiness; orders servers on the device side.
    pub server_trust: f64,
}

/// Turns one recommender's answer into a mass function.
///
/// The committed mass is `credibility * prediction.confidence`; the rest is
/// left uncertain.
pub fn make_bpa(prediction: &Prediction, credibility: f64) -> Result<BeliefMass> {
    if !(0.0..=1.0).contains(&credibility) {
        return Err(Error::invalid(format!(
            "credibility {credibility} outside [0, 1]"
        )));
    }
    if !(0.0..=1.0).contains(&prediction.confidence) {
        return Err(Error::invalid(format!(
            "prediction confidence {} outside [0, 1]",
            prediction.confidence
        )));
    }
    let lambda = credibility * prediction.confidence;
    Ok(match prediction.label {
        TrustStatus::Trustworthy => BeliefMass {
            trust: lambda,
            distrust: 0.0,
            uncertain: 1.0 - lambda,
        },
        TrustStatus::Untrustworthy => BeliefMass {
            trust: 0.0,
            distrust: lambda,
            uncertain: 1.0 - lambda,
        },
    })
}

/// Dempster's rule, normalized by `1 - K`.
pub fn combine(a: &BeliefMass, b: &BeliefMass) -> Result<BeliefMass> {
    let conflict = a.trust * b.distrust + a.distrust * b.trust;
    let norm = 1.0 - conflict;
    if norm <= f64::EPSILON {
        return Err(Error::EvidenceConflict);
    }
    let trust = a.trust * b.trust + a.trust * b.uncertain + a.uncertain * b.trust;
    let distrust = a.distrust * b.distrust + a.distrust * b.uncertain + a.uncertain * b.distrust;
    let uncertain = a.uncertain * b.uncertain;
    if conflict == 0.0 {
        return Ok(BeliefMass {
            trust,
            distrust,
            uncertain,
        });
    }
    Ok(BeliefMass {
        trust: trust / norm,
        distrust: distrust / norm,
        uncertain: uncertain / norm,
    })
}

/// Left fold of [`combine`] over the masses in order.
pub fn aggregate(masses: &[BeliefMass]) -> Result<Belief> {
    let (first, rest) = masses
        .split_first()
        .ok_or_else(|| Error::invalid("cannot aggregate an empty list of masses"))?;
    let mut acc = *first;
    for m in rest {
        acc = combine(&acc, m)?;
    }
    Ok(acc.into())
}

/// Trustworthy iff belief in trust strictly exceeds belief in distrust.
pub fn decide(belief: &Belief) -> TrustDecision {
    TrustDecision {
        trustworthy: belief.t > belief.n,
        server_trust: belief.t.clamp(0.0, 1.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(t: f64, n: f64, u: f64) -> BeliefMass {
        BeliefMass::new(t, n, u).unwrap()
    }

    fn close(a: &BeliefMass, b: &BeliefMass, tol: f64) -> bool {
        (a.trust - b.trust).abs() <= tol
            && (a.distrust - b.distrust).abs() <= tol
            && (a.uncertain - b.uncertain).abs() <= tol
    }

    fn pred(label: TrustStatus, confidence: f64) -> Prediction {
        Prediction { label, confidence }
    }

    #[test]
    fn bpa_examples() {
        let b = make_bpa(&pred(TrustStatus::Trustworthy, 1.0), 0.8).unwrap();
        assert!(close(&b, &m(0.8, 0.0, 0.2), 1e-12));
        let b = make_bpa(&pred(TrustStatus::Untrustworthy, 1.0), 0.0).unwrap();
        assert_eq!(b, BeliefMass::VACUOUS);
        let b = make_bpa(&pred(TrustStatus::Trustworthy, 0.5), 0.6).unwrap();
        assert!(close(&b, &m(0.3, 0.0, 0.7), 1e-12));
    }

    #[test]
    fn bpa_rejects_bad_credibility() {
        assert!(make_bpa(&pred(TrustStatus::Trustworthy, 1.0), 1.2).is_err());
        assert!(make_bpa(&pred(TrustStatus::Trustworthy, 1.0), -0.1).is_err());
        assert!(make_bpa(&pred(TrustStatus::Trustworthy, 1.0), f64::NAN).is_err());
    }

    #[test]
    fn combine_agreeing_sources() {
        let c = combine(&m(0.6, 0.0, 0.4), &m(0.6, 0.0, 0.4)).unwrap();
        assert!(close(&c, &m(0.84, 0.0, 0.16), 1e-12));
    }

    #[test]
    fn combine_conflicting_sources() {
        // K = 0.8 * 0.5 = 0.4
        let c = combine(&m(0.8, 0.0, 0.2), &m(0.0, 0.5, 0.5)).unwrap();
        assert!(close(&c, &m(0.4 / 0.6, 0.1 / 0.6, 0.1 / 0.6), 1e-12));
        let rounded = BeliefMass { trust: 0.6667, distrust: 0.1667, uncertain: 0.1667 };
        assert!(close(&c, &rounded, 1e-4));
    }

    #[test]
    fn vacuous_is_identity() {
        let x = m(0.35, 0.25, 0.4);
        assert_eq!(combine(&x, &BeliefMass::VACUOUS).unwrap(), x);
        assert_eq!(combine(&BeliefMass::VACUOUS, &x).unwrap(), x);
    }

    #[test]
    fn total_conflict_is_an_error() {
        let err = combine(&m(1.0, 0.0, 0.0), &m(0.0, 1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::EvidenceConflict));
        assert!(aggregate(&[m(1.0, 0.0, 0.0), m(0.0, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        let b = aggregate(&[m(0.7, 0.0, 0.3)]).unwrap();
        assert_eq!((b.t, b.n, b.u), (0.7, 0.0, 0.3));
        let b = aggregate(&[m(0.6, 0.0, 0.4), m(0.6, 0.0, 0.4)]).unwrap();
        assert!((b.t - 0.84).abs() < 1e-12 && b.n == 0.0 && (b.u - 0.16).abs() < 1e-12);
        let b = aggregate(&[BeliefMass::VACUOUS; 4]).unwrap();
        assert_eq!((b.t, b.n, b.u), (0.0, 0.0, 1.0));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn decision_examples() {
        let d = decide(&Belief { t: 0.84, n: 0.0, u: 0.16 });
        assert!(d.trustworthy);
        assert_eq!(d.server_trust, 0.84);
        let d = decide(&Belief { t: 0.0, n: 0.0, u: 1.0 });
        assert!(!d.trustworthy);
        assert_eq!(d.server_trust, 0.0);
        assert!(!decide(&Belief { t: 0.3, n: 0.5, u: 0.2 }).trustworthy);
    }

    fn favouring_trust() -> impl Strategy<Value = BeliefMass> {
        (0.0f64..=1.0).prop_map(|t| BeliefMass {
            trust: t,
            distrust: 0.0,
            uncertain: 1.0 - t,
        })
    }

    proptest! {
        #[test]
        fn agreement_reinforces(a in favouring_trust(), b in favouring_trust()) {
            let c = combine(&a, &b).unwrap();
            prop_assert!(c.trust >= a.trust.max(b.trust) - 1e-15);
            prop_assert!((c.total() - 1.0).abs() < 1e-9);
        }
    }
}
