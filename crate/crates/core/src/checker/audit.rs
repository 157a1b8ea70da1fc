//! Per-key ledger audit over recorded histories and structural audit of
//! quiescent tables.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::history::History;
use crate::baselines::OpKind;
use crate::set::NIL;
use crate::snapshot::TableSnapshot;
use crate::table::BucketState;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LedgerViolation {
    /// More successful adds than removes plus one, even with every
    /// overlapping remove taking effect first.
    DoubleAdd { key: u64, stamp: u64, surplus: i64 },
    /// A successful remove that no earlier add can account for.
    RemoveWithoutAdd { key: u64, stamp: u64, deficit: i64 },
    /// Adds minus removes disagrees with the final scan.
    FinalMembership {
        key: u64,
        balance: i64,
        present: bool,
    },
}

impl fmt::Display for LedgerViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LedgerViolation::DoubleAdd {
                key,
                stamp,
                surplus,
            } => {
                write!(
                    f,
                    "key {key}: {surplus} successful adds outstanding at stamp {stamp}"
                )
            }
            LedgerViolation::RemoveWithoutAdd {
                key,
                stamp,
                deficit,
            } => {
                write!(
                    f,
                    "key {key}: {deficit} more successful removes than adds at stamp {stamp}"
                )
            }
            LedgerViolation::FinalMembership {
                key,
                balance,
                present,
            } => {
                write!(
                    f,
                    "key {key}: ledger balance {balance} but final scan says present={present}"
                )
            }
        }
    }
}

/// Checks successful adds and removes of each key against the final scan.
///
/// Counts are taken at every stamp. Operations overlapping a stamp are
/// counted both ways, so a reported violation holds for every possible
/// linearization.
pub fn ledger_audit(h: &History, final_members: &HashSet<u64>) -> Vec<LedgerViolation> {
    ledger_audit_from(h, &HashSet::new(), final_members)
}

/// As [`ledger_audit`], for a set that started with `initial`.
pub fn ledger_audit_from(
    h: &History,
    initial: &HashSet<u64>,
    final_members: &HashSet<u64>,
) -> Vec<LedgerViolation> {
    // Per key: (stamp, delta to adds-invoked, adds-responded, removes-invoked, removes-responded).
    let mut events: BTreeMap<u64, Vec<(u64, [i64; 4])>> = BTreeMap::new();
    for r in h.records.iter().filter(|r| r.result) {
        let (inv, resp) = match r.op {
            OpKind::Add => ([1, 0, 0, 0], [0, 1, 0, 0]),
            OpKind::Remove => ([0, 0, 1, 0], [0, 0, 0, 1]),
            OpKind::Contains => continue,
        };
        let list = events.entry(r.key).or_default();
        list.push((r.invoke, inv));
        list.push((r.response, resp));
    }
    let mut violations = Vec::new();
    let keys: HashSet<u64> = events
        .keys()
        .copied()
        .chain(initial.iter().copied())
        .chain(final_members.iter().copied())
        .collect();
    let mut keys: Vec<u64> = keys.into_iter().collect();
    keys.sort_unstable();
    for key in keys {
        let base = i64::from(initial.contains(&key));
        let mut list = events.remove(&key).unwrap_or_default();
        list.sort_by_key(|&(stamp, _)| stamp);
        let mut c = [0i64; 4];
        let mut reported = (false, false);
        for (stamp, delta) in list {
            for (ci, d) in c.iter_mut().zip(delta) {
                *ci += d;
            }
            let [add_inv, add_resp, rem_inv, rem_resp] = c;
            let least = base + add_resp - rem_inv;
            let most = base + add_inv - rem_resp;
            if least > 1 && !reported.0 {
                violations.push(LedgerViolation::DoubleAdd {
                    key,
                    stamp,
                    surplus: least,
                });
                reported.0 = true;
            }
            if most < 0 && !reported.1 {
                violations.push(LedgerViolation::RemoveWithoutAdd {
                    key,
                    stamp,
                    deficit: -most,
                });
                reported.1 = true;
            }
        }
        let balance = base + c[1] - c[3];
        let present = final_members.contains(&key);
        if balance != i64::from(present) {
            violations.push(LedgerViolation::FinalMembership {
                key,
                balance,
                present,
            });
        }
    }
    violations
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructuralViolation {
    TransientState {
        bucket: usize,
        state: BucketState,
    },
    NilMember {
        bucket: usize,
    },
    StrayKey {
        bucket: usize,
        key: u64,
        state: BucketState,
    },
    OutsideNeighborhood {
        bucket: usize,
        key: u64,
        home: usize,
        distance: usize,
    },
    MissingBit {
        bucket: usize,
        key: u64,
        home: usize,
        offset: usize,
    },
    BitBeyondNeighborhood {
        home: usize,
        offset: usize,
    },
    StrayBit {
        home: usize,
        offset: usize,
        bucket: usize,
    },
    DuplicateKey {
        key: u64,
        first: usize,
        second: usize,
    },
}

impl fmt::Display for StructuralViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use StructuralViolation::*;
        match self {
            TransientState { bucket, state } => {
                write!(f, "bucket {bucket} left in transient state {state:?}")
            }
            NilMember { bucket } => write!(f, "bucket {bucket} is a member with the nil key"),
            StrayKey { bucket, key, state } => {
                write!(f, "bucket {bucket} is {state:?} but holds key {key}")
            }
            OutsideNeighborhood {
                bucket,
                key,
                home,
                distance,
            } => {
                write!(
                    f,
                    "key {key} at bucket {bucket} is {distance} buckets from home {home}"
                )
            }
            MissingBit {
                bucket,
                key,
                home,
                offset,
            } => {
                write!(
                    f,
                    "key {key} at bucket {bucket} has no bit {offset} in home {home}"
                )
            }
            BitBeyondNeighborhood { home, offset } => write!(
                f,
                "bucket {home} has bit {offset} set beyond the neighborhood"
            ),
            StrayBit {
                home,
                offset,
                bucket,
            } => {
                write!(
                    f,
                    "bucket {home} has bit {offset} set but bucket {bucket} holds none of its keys"
                )
            }
            DuplicateKey { key, first, second } => {
                write!(f, "key {key} is a member of buckets {first} and {second}")
            }
        }
    }
}

/// Checks the bucket invariants of a quiescent table.
pub fn structural_audit(s: &TableSnapshot) -> Vec<StructuralViolation> {
    use StructuralViolation::*;
    let h = s.neighborhood;
    let mut violations = Vec::new();
    let mut seen: HashMap<u64, usize> = HashMap::new();
    for (i, b) in s.buckets.iter().enumerate() {
        if b.state.is_transient() {
            violations.push(TransientState {
                bucket: i,
                state: b.state,
            });
        }
        if b.state == BucketState::Member {
            if b.key == NIL {
                violations.push(NilMember { bucket: i });
                continue;
            }
            if let Some(first) = seen.insert(b.key, i) {
                violations.push(DuplicateKey {
                    key: b.key,
                    first,
                    second: i,
                });
            }
            let home = s.home(b.key);
            let distance = s.distance(home, i);
            if distance >= h {
                violations.push(OutsideNeighborhood {
                    bucket: i,
                    key: b.key,
                    home,
                    distance,
                });
            } else if s.buckets[home].bitmask & (1 << distance) == 0 {
                violations.push(MissingBit {
                    bucket: i,
                    key: b.key,
                    home,
                    offset: distance,
                });
            }
        } else if b.key != NIL && !b.state.is_transient() {
            violations.push(StrayKey {
                bucket: i,
                key: b.key,
                state: b.state,
            });
        }
        let mut bm = b.bitmask;
        while bm != 0 {
            let offset = bm.trailing_zeros() as usize;
            bm &= bm - 1;
            if offset >= h {
                violations.push(BitBeyondNeighborhood { home: i, offset });
                continue;
            }
            let target = (i + offset) % s.capacity();
            let t = &s.buckets[target];
            if t.state != BucketState::Member || t.key == NIL || s.home(t.key) != i {
                violations.push(StrayBit {
                    home: i,
                    offset,
                    bucket: target,
                });
            }
        }
    }
    violations
}

/// Renders violations one JSON object per line.
pub fn to_json_lines<T: Serialize>(violations: &[T]) -> String {
    violations
        .iter()
        .map(|v| serde_json::to_string(v).expect("violations serialize") + "\n")
        .collect()
}
