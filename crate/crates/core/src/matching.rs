//! Trust-ordered preferences and quota-constrained device/server matching.
//!
//! Devices propose to servers in order of preference; a server accepts
//! while it is under quota and otherwise swaps out its least preferred
//! device when a better one asks. The engine is deterministic: devices
//! propose in ascending id order, one pass at a time, and each server
//! handles the requests of a pass in that same order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anything usable as a device or server identifier.
pub trait Id: Ord + Clone + Debug {}
impl<T: Ord + Clone + Debug> Id for T {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferenceList<O, C: Ord> {
    pub owner: O,
    /// Best first.
    pub ranked: Vec<C>,
    pub visited: BTreeSet<C>,
}

impl<O: Id, C: Id> PreferenceList<O, C> {
    pub fn new(owner: O, ranked: Vec<C>) -> Result<Self> {
        let unique: BTreeSet<&C> = ranked.iter().collect();
        if unique.len() != ranked.len() {
            return Err(Error::invalid(format!(
                "preference list of {owner:?} lists a counterpart twice"
            )));
        }
        Ok(Self {
            owner,
            ranked,
            visited: BTreeSet::new(),
        })
    }

    pub fn rank_of(&self, c: &C) -> Option<usize> {
        self.ranked.iter().position(|x| x == c)
    }

    pub fn prefers(&self, a: &C, b: &C) -> bool {
        match (self.rank_of(a), self.rank_of(b)) {
            (Some(x), Some(y)) => x < y,
            (Some(_), None) => true,
            _ => false,
        }
    }

    pub fn next_unvisited(&self) -> Option<&C> {
        self.ranked.iter().find(|c| !self.visited.contains(*c))
    }
}

fn ranked_by_trust<C: Id>(trusts: &BTreeMap<C, f64>) -> Vec<C> {
    let mut entries: Vec<(&C, f64)> = trusts
        .iter()
        .filter(|(_, t)| t.is_finite())
        .map(|(c, &t)| (c, t))
        .collect();
    // Map order is ascending id and the sort is stable, so ties keep it.
    entries.sort_by(|a, b| b.1.total_cmp(&a.1));
    entries.into_iter().map(|(c, _)| c.clone()).collect()
}

/// Servers by decreasing trust. Servers the device has no trust value for
/// are simply absent from the map and so never proposed to.
pub fn build_device_preferences<D: Id, S: Id>(
    device: D,
    server_trusts: &BTreeMap<S, f64>,
) -> PreferenceList<D, S> {
    PreferenceList {
        owner: device,
        ranked: ranked_by_trust(server_trusts),
        visited: BTreeSet::new(),
    }
}

/// Devices by decreasing trust.
pub fn build_server_preferences<S: Id, D: Id>(
    server: S,
    device_trusts: &BTreeMap<D, f64>,
) -> PreferenceList<S, D> {
    PreferenceList {
        owner: server,
        ranked: ranked_by_trust(device_trusts),
        visited: BTreeSet::new(),
    }
}

/// Capacity bookkeeping of one server during matching.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerQuota<S, D> {
    pub server: S,
    pub desired: usize,
    pub accepted: Vec<D>,
}

impl<S, D> ServerQuota<S, D> {
    pub fn current(&self) -> usize {
        self.accepted.len()
    }

    pub fn is_full(&self) -> bool {
        self.accepted.len() >= self.desired
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MessageKind {
    Propose,
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMessage<D, S> {
    pub kind: MessageKind,
    pub device: D,
    pub server: S,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching<D: Ord, S: Ord> {
    pub device_to_server: BTreeMap<D, Option<S>>,
    pub server_to_devices: BTreeMap<S, BTreeSet<D>>,
}

impl<D: Id, S: Id> Matching<D, S> {
    pub fn empty(
        devices: impl IntoIterator<Item = D>,
        servers: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            device_to_server: devices.into_iter().map(|d| (d, None)).collect(),
            server_to_devices: servers.into_iter().map(|s| (s, BTreeSet::new())).collect(),
        }
    }

    pub fn server_of(&self, device: &D) -> Option<&S> {
        self.device_to_server.get(device).and_then(Option::as_ref)
    }

    pub fn devices_of(&self, server: &S) -> impl Iterator<Item = &D> {
        self.server_to_devices.get(server).into_iter().flatten()
    }

    pub fn load(&self, server: &S) -> usize {
        self.server_to_devices.get(server).map_or(0, BTreeSet::len)
    }

    /// Pairs `device` with `server`, dropping any previous pairing of the device.
    pub fn assign(&mut self, device: D, server: S) {
        self.unassign(&device);
        self.server_to_devices
            .entry(server.clone())
            .or_default()
            .insert(device.clone());
        self.device_to_server.insert(device, Some(server));
    }

    pub fn unassign(&mut self, device: &D) {
        if let Some(Some(old)) = self.device_to_server.get(device).cloned() {
            if let Some(set) = self.server_to_devices.get_mut(&old) {
                set.remove(device);
            }
        }
        if let Some(slot) = self.device_to_server.get_mut(device) {
            *slot = None;
        }
    }

    /// `d ∈ Γ(a)` exactly when `Γ(d) = a`.
    pub fn is_consistent(&self) -> bool {
        let forward = self.device_to_server.iter().all(|(d, s)| match s {
            Some(s) => self
                .server_to_devices
                .get(s)
                .is_some_and(|set| set.contains(d)),
            None => true,
        });
        let backward = self.server_to_devices.iter().all(|(s, set)| {
            set.iter()
                .all(|d| self.device_to_server.get(d) == Some(&Some(s.clone())))
        });
        forward && backward
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&D, &S)> {
        self.device_to_server
            .iter()
            .filter_map(|(d, s)| s.as_ref().map(|s| (d, s)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockingPair<D, S> {
    pub device: D,
    pub server: S,
}

fn check_inputs<D: Id, S: Id>(
    device_prefs: &[PreferenceList<D, S>],
    server_prefs: &[PreferenceList<S, D>],
    quotas: &BTreeMap<S, usize>,
) -> Result<()> {
    let mut seen = BTreeSet::new();
    for p in device_prefs {
        if !seen.insert(&p.owner) {
            return Err(Error::invalid(format!("device {:?} has two preference lists", p.owner)));
        }
        if p.ranked.iter().collect::<BTreeSet<_>>().len() != p.ranked.len() {
            return Err(Error::invalid(format!("device {:?} ranks a server twice", p.owner)));
        }
    }
    let mut seen = BTreeSet::new();
    for p in server_prefs {
        if !seen.insert(&p.owner) {
            return Err(Error::invalid(format!("server {:?} has two preference lists", p.owner)));
        }
        if p.ranked.iter().collect::<BTreeSet<_>>().len() != p.ranked.len() {
            return Err(Error::invalid(format!("server {:?} ranks a device twice", p.owner)));
        }
        match quotas.get(&p.owner) {
            Some(0) => {
                return Err(Error::invalid(format!("server {:?} has a zero quota", p.owner)))
            }
            None => {
                return Err(Error::invalid(format!("server {:?} has no quota", p.owner)))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Device-proposing deferred acceptance with server quotas.
pub fn run_matching<D: Id, S: Id>(
    device_prefs: &[PreferenceList<D, S>],
    server_prefs: &[PreferenceList<S, D>],
    quotas: &BTreeMap<S, usize>,
) -> Result<Matching<D, S>> {
    run_matching_with_log(device_prefs, server_prefs, quotas).map(|(m, _)| m)
}

/// A matching together with the messages that produced it.
pub type MatchingWithLog<D, S> = (Matching<D, S>, Vec<PairMessage<D, S>>);

/// [`run_matching`], also returning every propose/accept/reject message in
/// the order it was sent.
pub fn run_matching_with_log<D: Id, S: Id>(
    device_prefs: &[PreferenceList<D, S>],
    server_prefs: &[PreferenceList<S, D>],
    quotas: &BTreeMap<S, usize>,
) -> Result<MatchingWithLog<D, S>> {
    check_inputs(device_prefs, server_prefs, quotas)?;

    let mut devices: BTreeMap<D, PreferenceList<D, S>> = device_prefs
        .iter()
        .map(|p| (p.owner.clone(), p.clone()))
        .collect();
    let servers: BTreeMap<S, &PreferenceList<S, D>> =
        server_prefs.iter().map(|p| (p.owner.clone(), p)).collect();
    let mut state: BTreeMap<S, ServerQuota<S, D>> = servers
        .keys()
        .map(|s| {
            (
                s.clone(),
                ServerQuota {
                    server: s.clone(),
                    desired: quotas[s],
                    accepted: Vec::new(),
                },
            )
        })
        .collect();
    let mut log = Vec::new();
    let msg = |kind, device: &D, server: &S| PairMessage {
        kind,
        device: device.clone(),
        server: server.clone(),
    };

    let mut free: BTreeSet<D> = devices.keys().cloned().collect();
    loop {
        // Every free device sends one request to its best unvisited server.
        let mut requests: BTreeMap<S, Vec<D>> = BTreeMap::new();
        for d in &free {
            let prefs = devices.get_mut(d).expect("free devices have preferences");
            if let Some(s) = prefs.next_unvisited().cloned() {
                prefs.visited.insert(s.clone());
                log.push(msg(MessageKind::Propose, d, &s));
                requests.entry(s).or_default().push(d.clone());
            }
        }
        if requests.is_empty() {
            break;
        }
        let mut next_free = BTreeSet::new();
        for (s, mut queue) in requests {
            let (Some(prefs), Some(quota)) = (servers.get(&s), state.get_mut(&s)) else {
                // Not a participating server: it never answers yes.
                for d in queue {
                    log.push(msg(MessageKind::Reject, &d, &s));
                    next_free.insert(d);
                }
                continue;
            };
            while !queue.is_empty() {
                let d = queue.remove(0);
                let Some(rank) = prefs.rank_of(&d) else {
                    log.push(msg(MessageKind::Reject, &d, &s));
                    next_free.insert(d);
                    continue;
                };
                if !quota.is_full() {
                    log.push(msg(MessageKind::Accept, &d, &s));
                    quota.accepted.push(d);
                    continue;
                }
                let (worst_idx, worst_rank) = quota
                    .accepted
                    .iter()
                    .enumerate()
                    .map(|(i, a)| (i, prefs.rank_of(a).unwrap_or(usize::MAX)))
                    .max_by_key(|&(_, r)| r)
                    .expect("a full server holds at least one device");
                if rank < worst_rank {
                    let evicted = quota.accepted.swap_remove(worst_idx);
                    log.push(msg(MessageKind::Reject, &evicted, &s));
                    next_free.insert(evicted);
                    log.push(msg(MessageKind::Accept, &d, &s));
                    quota.accepted.push(d);
                } else {
                    log.push(msg(MessageKind::Reject, &d, &s));
                    // Everything still queued that ranks below d is declined too.
                    let (declined, kept): (Vec<D>, Vec<D>) = queue
                        .into_iter()
                        .partition(|x| prefs.rank_of(x).is_none_or(|r| r > rank));
                    for x in declined {
                        log.push(msg(MessageKind::Reject, &x, &s));
                        next_free.insert(x);
                    }
                    queue = kept;
                    next_free.insert(d);
                }
            }
        }
        free = next_free;
    }

    let mut matching = Matching::empty(devices.keys().cloned(), servers.keys().cloned());
    for (s, quota) in state {
        for d in quota.accepted {
            matching.assign(d, s.clone());
        }
    }
    Ok((matching, log))
}

/// All pairs that would rather be matched to each other than keep their
/// current assignment. Empty exactly when the matching is stable.
pub fn find_blocking_pairs<D: Id, S: Id>(
    matching: &Matching<D, S>,
    device_prefs: &[PreferenceList<D, S>],
    server_prefs: &[PreferenceList<S, D>],
    quotas: &BTreeMap<S, usize>,
) -> Vec<BlockingPair<D, S>> {
    let servers: BTreeMap<&S, &PreferenceList<S, D>> =
        server_prefs.iter().map(|p| (&p.owner, p)).collect();
    let mut out = Vec::new();
    for dp in device_prefs {
        let d = &dp.owner;
        let current = matching.server_of(d);
        for s in &dp.ranked {
            if Some(s) == current {
                break;
            }
            let Some(sp) = servers.get(s) else { continue };
            let Some(rank) = sp.rank_of(d) else { continue };
            let quota = quotas.get(s).copied().unwrap_or(0);
            let spare = matching.load(s) < quota;
            let displaces = matching
                .devices_of(s)
                .any(|m| sp.rank_of(m).is_none_or(|r| r > rank));
            if spare || displaces {
                out.push(BlockingPair {
                    device: d.clone(),
                    server: s.clone(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    type Prefs = (Vec<PreferenceList<u32, u32>>, Vec<PreferenceList<u32, u32>>);

    fn lists(devices: &[(u32, &[u32])], servers: &[(u32, &[u32])]) -> Prefs {
        (
            devices
                .iter()
                .map(|(d, r)| PreferenceList::new(*d, r.to_vec()).unwrap())
                .collect(),
            servers
                .iter()
                .map(|(s, r)| PreferenceList::new(*s, r.to_vec()).unwrap())
                .collect(),
        )
    }

    fn quotas(q: &[(u32, usize)]) -> BTreeMap<u32, usize> {
        q.iter().copied().collect()
    }

    #[test]
    fn device_preferences_sort_by_trust() {
        let trusts: BTreeMap<&str, f64> = [("s1", 0.9), ("s2", 0.4)].into_iter().collect();
        assert_eq!(build_device_preferences("d1", &trusts).ranked, vec!["s1", "s2"]);
        let empty: BTreeMap<&str, f64> = BTreeMap::new();
        assert!(build_device_preferences("d1", &empty).ranked.is_empty());
    }

    #[test]
    fn ties_break_by_ascending_id() {
        let a: BTreeMap<u32, f64> = [(2, 0.5), (1, 0.5), (3, 0.5)].into_iter().collect();
        let b: BTreeMap<u32, f64> = [(3, 0.5), (1, 0.5), (2, 0.5)].into_iter().collect();
        assert_eq!(build_device_preferences(0, &a).ranked, vec![1, 2, 3]);
        assert_eq!(build_device_preferences(0, &b).ranked, vec![1, 2, 3]);
        assert_eq!(build_server_preferences(0, &b).ranked, vec![1, 2, 3]);
    }

    #[test]
    fn server_preferences_examples() {
        let t: BTreeMap<&str, f64> = [("d1", 1.0), ("d2", 0.46)].into_iter().collect();
        assert_eq!(build_server_preferences("s1", &t).ranked, vec!["d1", "d2"]);
        let t: BTreeMap<&str, f64> = [("d9", 0.1)].into_iter().collect();
        assert_eq!(build_server_preferences("s1", &t).ranked, vec!["d9"]);
    }

    #[test]
    fn three_devices_two_seats() {
        let (dp, sp) = lists(
            &[(1, &[1, 2]), (2, &[1, 2]), (3, &[1, 2])],
            &[(1, &[1, 2, 3]), (2, &[1, 2, 3])],
        );
        let q = quotas(&[(1, 1), (2, 1)]);
        let m = run_matching(&dp, &sp, &q).unwrap();
        assert_eq!(m.server_of(&1), Some(&1));
        assert_eq!(m.server_of(&2), Some(&2));
        assert_eq!(m.server_of(&3), None);
        assert!(m.is_consistent());
        assert!(find_blocking_pairs(&m, &dp, &sp, &q).is_empty());
    }

    #[test]
    fn swapped_assignment_is_blocked() {
        let (dp, sp) = lists(
            &[(1, &[1, 2]), (2, &[1, 2]), (3, &[1, 2])],
            &[(1, &[1, 2, 3]), (2, &[1, 2, 3])],
        );
        let q = quotas(&[(1, 1), (2, 1)]);
        let mut m = Matching::empty([1, 2, 3], [1, 2]);
        m.assign(2, 1);
        m.assign(1, 2);
        let blocking = find_blocking_pairs(&m, &dp, &sp, &q);
        assert!(blocking.contains(&BlockingPair { device: 1, server: 1 }));
    }

    #[test]
    fn empty_matching_blocked_by_every_mutual_pair() {
        let (dp, sp) = lists(&[(1, &[1]), (2, &[1, 2])], &[(1, &[1, 2]), (2, &[2])]);
        let q = quotas(&[(1, 2), (2, 1)]);
        let m = Matching::empty([1, 2], [1, 2]);
        let blocking = find_blocking_pairs(&m, &dp, &sp, &q);
        assert_eq!(
            blocking,
            vec![
                BlockingPair { device: 1, server: 1 },
                BlockingPair { device: 2, server: 1 },
                BlockingPair { device: 2, server: 2 },
            ]
        );
    }

    #[test]
    fn single_pair() {
        let (dp, sp) = lists(&[(1, &[1])], &[(1, &[1])]);
        let m = run_matching(&dp, &sp, &quotas(&[(1, 1)])).unwrap();
        assert_eq!(m.server_of(&1), Some(&1));
    }

    #[test]
    fn quota_two_without_eviction() {
        let (dp, sp) = lists(&[(1, &[1]), (2, &[1])], &[(1, &[2, 1])]);
        let (m, log) = run_matching_with_log(&dp, &sp, &quotas(&[(1, 2)])).unwrap();
        assert_eq!(m.load(&1), 2);
        assert!(log.iter().all(|x| x.kind != MessageKind::Reject));
    }

    #[test]
    fn eviction_frees_device_to_try_elsewhere() {
        // d1 proposes first and is later displaced at s1 by d2.
        let (dp, sp) = lists(&[(2, &[1, 2]), (1, &[1, 2])], &[(1, &[2, 1]), (2, &[1, 2])]);
        let q = quotas(&[(1, 1), (2, 1)]);
        let m = run_matching(&dp, &sp, &q).unwrap();
        assert_eq!(m.server_of(&2), Some(&1));
        assert_eq!(m.server_of(&1), Some(&2));
    }

    #[test]
    fn unlisted_device_is_rejected() {
        let (dp, sp) = lists(&[(1, &[1]), (2, &[1])], &[(1, &[1])]);
        let m = run_matching(&dp, &sp, &quotas(&[(1, 5)])).unwrap();
        assert_eq!(m.server_of(&2), None);
        assert_eq!(m.server_of(&1), Some(&1));
    }

    #[test]
    fn bad_inputs_rejected() {
        let (dp, sp) = lists(&[(1, &[1])], &[(1, &[1])]);
        assert!(run_matching(&dp, &sp, &quotas(&[(1, 0)])).is_err());
        assert!(run_matching(&dp, &sp, &quotas(&[])).is_err());
        assert!(PreferenceList::new(1u32, vec![1u32, 1]).is_err());
    }
}
