//! ID3 classifier over a device's history of server interactions.
//!
//! Each recommender keeps one of these trees and uses it to answer trust
//! queries about servers it is asked about.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TrustStatus {
    Trustworthy,
    Untrustworthy,
}

impl TrustStatus {
    pub fn flipped(self) -> Self {
        match self {
            TrustStatus::Trustworthy => TrustStatus::Untrustworthy,
            TrustStatus::Untrustworthy => TrustStatus::Trustworthy,
        }
    }

    pub fn is_trustworthy(self) -> bool {
        self == TrustStatus::Trustworthy
    }
}

impl fmt::Display for TrustStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrustStatus::Trustworthy => "YES",
            TrustStatus::Untrustworthy => "NO",
        })
    }
}

impl FromStr for TrustStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "yes" | "y" | "t" | "true" | "trustworthy" => Ok(TrustStatus::Trustworthy),
            "no" | "n" | "f" | "false" | "untrustworthy" => Ok(TrustStatus::Untrustworthy),
            other => Err(Error::invalid(format!("unknown trust status {other:?}"))),
        }
    }
}

/// Categorical attributes a tree may split on. The trust score is never one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Attribute {
    Server,
    Location,
    Payment,
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Attribute::Server => "server",
            Attribute::Location => "location",
            Attribute::Payment => "payment",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionRecord {
    pub server_id: String,
    pub location: String,
    pub payment: Option<String>,
    /// Observed trust percentage. Kept for reporting only.
    pub trust_score: Option<f64>,
    /// `None` on query rows.
    pub trust_status: Option<TrustStatus>,
}

impl InteractionRecord {
    pub fn query(server_id: impl Into<String>, location: impl Into<String>) -> Self {
        Self {
            server_id: server_id.into(),
            location: location.into(),
            payment: None,
            trust_score: None,
            trust_status: None,
        }
    }

    pub fn value(&self, attribute: Attribute) -> &str {
        match attribute {
            Attribute::Server => &self.server_id,
            Attribute::Location => &self.location,
            Attribute::Payment => self.payment.as_deref().unwrap_or(""),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryDataset {
    pub records: Vec<InteractionRecord>,
    pub attributes: Vec<Attribute>,
}

impl HistoryDataset {
    /// Every record must carry a trust status.
    pub fn new(records: Vec<InteractionRecord>, attributes: Vec<Attribute>) -> Result<Self> {
        if let Some(i) = records.iter().position(|r| r.trust_status.is_none()) {
            return Err(Error::invalid(format!(
                "history row {i} has no trust status"
            )));
        }
        for (i, a) in attributes.iter().enumerate() {
            if attributes[..i].contains(a) {
                return Err(Error::invalid(format!("attribute {a} listed twice")));
            }
        }
        Ok(Self {
            records,
            attributes,
        })
    }

    /// Server and location, plus payment when any record has one.
    pub fn with_default_attributes(records: Vec<InteractionRecord>) -> Result<Self> {
        let mut attributes = vec![Attribute::Server, Attribute::Location];
        if records.iter().any(|r| r.payment.is_some()) {
            attributes.push(Attribute::Payment);
        }
        Self::new(records, attributes)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leaf {
    pub label: TrustStatus,
    /// Majority fraction among the training rows that reached this node.
    pub confidence: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DecisionTree {
    Leaf(Leaf),
    Branch {
        attribute: Attribute,
        children: BTreeMap<String, DecisionTree>,
        /// Answer for attribute values never seen in training.
        fallback: Leaf,
    },
}

impl DecisionTree {
    pub fn depth(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 0,
            DecisionTree::Branch { children, .. } => {
                1 + children.values().map(DecisionTree::depth).max().unwrap_or(0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: TrustStatus,
    pub confidence: f64,
}

/// Shannon entropy in bits of a class histogram.
pub fn entropy(class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("entropy of an empty class histogram"));
    }
    let total = total as f64;
    let h = class_counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.log2()
        })
        .sum::<f64>();
    Ok(h.max(0.0))
}

fn label_counts<'a>(rows: impl IntoIterator<Item = &'a InteractionRecord>) -> [usize; 2] {
    let mut counts = [0usize; 2];
    for r in rows {
        match r.trust_status {
            Some(TrustStatus::Trustworthy) => counts[0] += 1,
            Some(TrustStatus::Untrustworthy) => counts[1] += 1,
            None => {}
        }
    }
    counts
}

fn gain_over(rows: &[&InteractionRecord], attribute: Attribute) -> f64 {
    let total = rows.len() as f64;
    let parent = entropy(&label_counts(rows.iter().copied())).unwrap_or(0.0);
    let mut groups: BTreeMap<&str, [usize; 2]> = BTreeMap::new();
    for r in rows {
        let slot = groups.entry(r.value(attribute)).or_default();
        match r.trust_status {
            Some(TrustStatus::Trustworthy) => slot[0] += 1,
            Some(TrustStatus::Untrustworthy) => slot[1] += 1,
            None => {}
        }
    }
    let remainder: f64 = groups
        .values()
        .map(|c| (c[0] + c[1]) as f64 / total * entropy(c).unwrap_or(0.0))
        .sum();
    (parent - remainder).max(0.0)
}

/// Entropy reduction from splitting `data` on `attribute`.
pub fn information_gain(data: &HistoryDataset, attribute: Attribute) -> Result<f64> {
    if !data.attributes.contains(&attribute) {
        return Err(Error::invalid(format!(
            "attribute {attribute} is not part of the dataset"
        )));
    }
    if data.is_empty() {
        return Err(Error::invalid("information gain of an empty dataset"));
    }
    let rows: Vec<&InteractionRecord> = data.records.iter().collect();
    Ok(gain_over(&rows, attribute))
}

// Ties go to Untrustworthy.
fn majority(counts: [usize; 2]) -> Leaf {
    let support = counts[0] + counts[1];
    let label = if counts[0] > counts[1] {
        TrustStatus::Trustworthy
    } else {
        TrustStatus::Untrustworthy
    };
    let top = counts[0].max(counts[1]);
    Leaf {
        label,
        confidence: if support == 0 {
            0.0
        } else {
            top as f64 / support as f64
        },
        support,
    }
}

/// Greedy ID3 without pruning. Equal gains go to the attribute listed first.
pub fn build_tree(data: &HistoryDataset) -> Result<DecisionTree> {
    if data.is_empty() {
        return Err(Error::invalid("cannot build a tree from an empty history"));
    }
    let rows: Vec<&InteractionRecord> = data.records.iter().collect();
    Ok(grow(&rows, &data.attributes, majority(label_counts(rows.iter().copied()))))
}

fn grow(rows: &[&InteractionRecord], remaining: &[Attribute], parent: Leaf) -> DecisionTree {
    if rows.is_empty() {
        return DecisionTree::Leaf(Leaf {
            support: 0,
            ..parent
        });
    }
    let counts = label_counts(rows.iter().copied());
    let here = majority(counts);
    if counts[0] == 0 || counts[1] == 0 || remaining.is_empty() {
        return DecisionTree::Leaf(here);
    }

    let mut best = remaining[0];
    let mut best_gain = f64::NEG_INFINITY;
    for &a in remaining {
        let g = gain_over(rows, a);
        if g > best_gain {
            best = a;
            best_gain = g;
        }
    }

    let mut partitions: BTreeMap<&str, Vec<&InteractionRecord>> = BTreeMap::new();
    for r in rows {
        partitions.entry(r.value(best)).or_default().push(r);
    }
    let rest: Vec<Attribute> = remaining.iter().copied().filter(|&a| a != best).collect();
    let children = partitions
        .into_iter()
        .map(|(value, subset)| (value.to_string(), grow(&subset, &rest, here)))
        .collect();
    DecisionTree::Branch {
        attribute: best,
        children,
        fallback: here,
    }
}

pub fn predict(tree: &DecisionTree, query: &InteractionRecord) -> Prediction {
    let mut node = tree;
    loop {
        match node {
            DecisionTree::Leaf(leaf) => {
                return Prediction {
                    label: leaf.label,
                    confidence: leaf.confidence,
                }
            }
            DecisionTree::Branch {
                attribute,
                children,
                fallback,
            } => match children.get(query.value(*attribute)) {
                Some(child) => node = child,
                None => {
                    return Prediction {
                        label: fallback.label,
                        confidence: fallback.confidence,
                    }
                }
            },
        }
    }
}

/// The ten labelled rows of the worked example history.
pub fn worked_example_history() -> HistoryDataset {
    use TrustStatus::*;
    let rows = [
        ("S1", "Asia", 99.05, Trustworthy),
        ("S1", "America", 100.0, Trustworthy),
        ("S2", "Africa", 99.37, Trustworthy),
        ("S2", "Africa", 99.88, Trustworthy),
        ("S3", "America", 99.54, Untrustworthy),
        ("S4", "Asia", 73.69, Untrustworthy),
        ("S4", "America", 97.62, Trustworthy),
        ("S4", "America", 92.42, Trustworthy),
        ("S4", "Africa", 87.62, Untrustworthy),
        ("S4", "Europe", 82.42, Untrustworthy),
    ];
    let records = rows
        .iter()
        .map(|&(s, l, score, status)| InteractionRecord {
            server_id: s.into(),
            location: l.into(),
            payment: None,
            trust_score: Some(score),
            trust_status: Some(status),
        })
        .collect();
    HistoryDataset::new(records, vec![Attribute::Server, Attribute::Location])
        .expect("worked example is well formed")
}
