//! Per-recommender credibility, adjusted after every aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dst::Belief;
use crate::recommender_tree::TrustStatus;

pub const DEFAULT_CREDIBILITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement<K> {
    pub recommender: K,
    pub verdict: TrustStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "K: Ord + Serialize",
    deserialize = "K: Ord + Deserialize<'de>"
))]
pub struct CredibilityLedger<K> {
    pub initial_score: f64,
    pub scores: BTreeMap<K, f64>,
}

impl<K: Ord> Default for CredibilityLedger<K> {
    fn default() -> Self {
        Self::new(DEFAULT_CREDIBILITY)
    }
}

impl<K: Ord> CredibilityLedger<K> {
    pub fn new(initial_score: f64) -> Self {
        Self {
            initial_score: initial_score.clamp(0.0, 1.0),
            scores: BTreeMap::new(),
        }
    }

    pub fn get(&self, recommender: &K) -> f64 {
        self.scores
            .get(recommender)
            .copied()
            .unwrap_or(self.initial_score)
    }

    /// Rewards an endorsement that agrees with the aggregated belief and
    /// penalizes one that disagrees. Returns the new score.
    ///
    /// Agreement adds the larger of the two beliefs (capped at 1);
    /// disagreement takes the distance to the smaller one, so a recommender
    /// already below half of that belief bounces back up rather than going
    /// negative. Tied beliefs leave the score unchanged.
    pub fn update(&mut self, endorsement: Endorsement<K>, belief: &Belief) -> f64 {
        let current = self.get(&endorsement.recommender);
        let (t, n) = (belief.t, belief.n);
        if t == n {
            return current;
        }
        let outcome = if t > n {
            TrustStatus::Trustworthy
        } else {
            TrustStatus::Untrustworthy
        };
        let next = if endorsement.verdict == outcome {
            (current + t.max(n)).min(1.0)
        } else {
            (current - t.min(n)).abs()
        };
        let next = next.clamp(0.0, 1.0);
        self.scores.insert(endorsement.recommender, next);
        next
    }
}

pub fn get_credibility<K: Ord>(ledger: &CredibilityLedger<K>, recommender: &K) -> f64 {
    ledger.get(recommender)
}

pub fn update_credibility<K: Ord>(
    ledger: &mut CredibilityLedger<K>,
    endorsement: Endorsement<K>,
    belief: &Belief,
) -> f64 {
    ledger.update(endorsement, belief)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use TrustStatus::*;

    fn belief(t: f64, n: f64) -> Belief {
        Belief { t, n, u: 1.0 - t - n }
    }

    #[test]
    fn agreement_saturates() {
        let mut ledger = CredibilityLedger::default();
        let s = ledger.update(Endorsement { recommender: "r1", verdict: Trustworthy }, &belief(0.8, 0.1));
        assert_eq!(s, 1.0);
        assert_eq!(get_credibility(&ledger, &"r1"), 1.0);
        let s = ledger.update(Endorsement { recommender: "r1", verdict: Trustworthy }, &belief(0.8, 0.1));
        assert_eq!(s, 1.0);
    }

    #[test]
    fn disagreement_subtracts_smaller_belief() {
        let mut ledger = CredibilityLedger::default();
        ledger.scores.insert("r2", 0.9);
        let s = update_credibility(
            &mut ledger,
            Endorsement { recommender: "r2", verdict: Trustworthy },
            &belief(0.2, 0.7),
        );
        assert!((s - 0.7).abs() < 1e-12);
        assert!((ledger.get(&"r2") - 0.7).abs() < 1e-12);
    }

    #[test]
    fn untrustworthy_verdicts_mirror() {
        let mut ledger = CredibilityLedger::default();
        assert_eq!(
            ledger.update(Endorsement { recommender: 1, verdict: Untrustworthy }, &belief(0.1, 0.3)),
            0.8
        );
        assert!(
            (ledger.update(Endorsement { recommender: 2, verdict: Untrustworthy }, &belief(0.6, 0.3))
                - 0.2)
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn unknown_recommender_gets_default() {
        let ledger: CredibilityLedger<&str> = CredibilityLedger::default();
        assert_eq!(ledger.get(&"nobody"), 0.5);
    }

    #[test]
    fn tie_is_a_no_op() {
        let mut ledger = CredibilityLedger::default();
        let s = ledger.update(Endorsement { recommender: 7, verdict: Trustworthy }, &belief(0.0, 0.0));
        assert_eq!(s, 0.5);
        assert!(ledger.scores.is_empty());
    }

    #[test]
    fn ledger_json_round_trip() {
        let mut ledger = CredibilityLedger::default();
        ledger.update(Endorsement { recommender: 3u32, verdict: Trustworthy }, &belief(0.6, 0.1));
        let json = serde_json::to_string(&ledger).unwrap();
        let back: CredibilityLedger<u32> = serde_json::from_str(&json).unwrap();
        assert_eq!(back, ledger);
    }

    fn arb_belief() -> impl Strategy<Value = Belief> {
        (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(a, b)| {
            let t = a;
            let n = (1.0 - t) * b;
            Belief { t, n, u: 1.0 - t - n }
        })
    }

    proptest! {
        #[test]
        fn scores_stay_in_unit_interval(
            ops in prop::collection::vec((0u8..4, any::<bool>(), arb_belief()), 1..60)
        ) {
            let mut ledger = CredibilityLedger::default();
            for (r, t, b) in ops {
                let verdict = if t { Trustworthy } else { Untrustworthy };
                let before = ledger.get(&r);
                let after = ledger.update(Endorsement { recommender: r, verdict }, &b);
                prop_assert!((0.0..=1.0).contains(&after));
                let agrees = (b.t > b.n && t) || (b.t < b.n && !t);
                let disagrees = (b.t > b.n && !t) || (b.t < b.n && t);
                if agrees { prop_assert!(after >= before); }
                // |φ - Y| can only exceed φ when φ < Y / 2.
                if disagrees && before >= b.t.min(b.n) / 2.0 { prop_assert!(after <= before); }
            }
        }

        #[test]
        fn distinct_recommenders_commute(
            a in (any::<bool>(), arb_belief()),
            b in (any::<bool>(), arb_belief()),
        ) {
            let v = |t: bool| if t { Trustworthy } else { Untrustworthy };
            let mut x = CredibilityLedger::default();
            x.update(Endorsement { recommender: 1, verdict: v(a.0) }, &a.1);
            x.update(Endorsement { recommender: 2, verdict: v(b.0) }, &b.1);
            let mut y = CredibilityLedger::default();
            y.update(Endorsement { recommender: 2, verdict: v(b.0) }, &b.1);
            y.update(Endorsement { recommender: 1, verdict: v(a.0) }, &a.1);
            prop_assert_eq!(x, y);
        }
    }
}
