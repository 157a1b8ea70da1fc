//! Exhaustive linearizability search for small set histories.
//!
//! Depth-first search over the order in which operations take effect,
//! memoized on (operations done, set contents). An operation may go next
//! only when no pending operation responded before it was invoked.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use super::history::{History, OpRecord};
use crate::baselines::OpKind;

/// Largest history the search accepts.
pub const MAX_OPS: usize = 14;

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("history has {len} operations; the search is bounded at {max}")]
pub struct SearchBoundExceeded {
    pub len: usize,
    pub max: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    /// A legal sequential order of the records.
    Linearizable(Vec<OpRecord>),
    NotLinearizable(LinearizabilityViolation),
}

impl Verdict {
    pub fn is_linearizable(&self) -> bool {
        matches!(self, Verdict::Linearizable(_))
    }
}

/// The shortest prefix of the history, cut at a response stamp, that has
/// no legal order. Operations still running at `cut` appear in `pending`;
/// they may or may not have taken effect.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LinearizabilityViolation {
    pub cut: u64,
    pub completed: Vec<OpRecord>,
    pub pending: Vec<OpRecord>,
}

impl fmt::Display for LinearizabilityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "no legal order for the history up to stamp {}:",
            self.cut
        )?;
        for r in &self.completed {
            writeln!(f, "  {r}")?;
        }
        for r in &self.pending {
            writeln!(
                f,
                "  t{} [{:>4},  ...] {}({}) pending",
                r.thread, r.invoke, r.op, r.key
            )?;
        }
        Ok(())
    }
}

struct Op {
    kind: OpKind,
    key: usize,
    /// `None` for an operation still pending at the cut.
    result: Option<bool>,
    invoke: u64,
    response: u64,
}

struct Search<'a> {
    ops: &'a [Op],
    required: u32,
    failed: HashSet<(u32, u64)>,
    order: Vec<usize>,
}

impl Search<'_> {
    fn run(&mut self, done: u32, state: u64) -> bool {
        if done & self.required == self.required {
            return true;
        }
        if self.failed.contains(&(done, state)) {
            return false;
        }
        let earliest_response = (0..self.ops.len())
            .filter(|&j| done & (1 << j) == 0)
            .map(|j| self.ops[j].response)
            .min()
            .unwrap_or(u64::MAX);
        for i in 0..self.ops.len() {
            let op = &self.ops[i];
            if done & (1 << i) != 0 || op.invoke > earliest_response {
                continue;
            }
            let bit = 1u64 << op.key;
            let present = state & bit != 0;
            let (result, next) = match op.kind {
                OpKind::Add => (!present, state | bit),
                OpKind::Remove => (present, state & !bit),
                OpKind::Contains => (present, state),
            };
            if op.result.is_some_and(|r| r != result) {
                continue;
            }
            self.order.push(i);
            if self.run(done | 1 << i, next) {
                return true;
            }
            self.order.pop();
        }
        self.failed.insert((done, state));
        false
    }
}

fn search(records: &[OpRecord], cut: u64, initial: &HashSet<u64>) -> Option<Vec<usize>> {
    let mut keys: HashMap<u64, usize> = HashMap::new();
    for r in records {
        let next = keys.len();
        keys.entry(r.key).or_insert(next);
    }
    let ops: Vec<Op> = records
        .iter()
        .map(|r| {
            let done = r.response <= cut;
            Op {
                kind: r.op,
                key: keys[&r.key],
                result: done.then_some(r.result),
                invoke: r.invoke,
                response: if done { r.response } else { u64::MAX },
            }
        })
        .collect();
    let required = ops
        .iter()
        .enumerate()
        .filter(|(_, op)| op.result.is_some())
        .fold(0, |m, (i, _)| m | 1 << i);
    let state = keys
        .iter()
        .filter(|(k, _)| initial.contains(k))
        .fold(0, |s, (_, &i)| s | 1 << i);
    let mut s = Search {
        ops: &ops,
        required,
        failed: HashSet::new(),
        order: Vec::new(),
    };
    s.run(0, state).then_some(s.order)
}

/// Checks a history against a set that starts empty.
pub fn check_linearizable(h: &History) -> Result<Verdict, SearchBoundExceeded> {
    check_linearizable_from(h, &HashSet::new())
}

/// Checks a history against a set that starts with `initial`.
pub fn check_linearizable_from(
    h: &History,
    initial: &HashSet<u64>,
) -> Result<Verdict, SearchBoundExceeded> {
    if h.len() > MAX_OPS {
        return Err(SearchBoundExceeded {
            len: h.len(),
            max: MAX_OPS,
        });
    }
    let mut records = h.records.clone();
    records.sort_by_key(|r| r.invoke);
    if let Some(order) = search(&records, u64::MAX, initial) {
        return Ok(Verdict::Linearizable(
            order.into_iter().map(|i| records[i]).collect(),
        ));
    }
    let mut cuts: Vec<u64> = records.iter().map(|r| r.response).collect();
    cuts.sort_unstable();
    for cut in cuts {
        let prefix: Vec<OpRecord> = records
            .iter()
            .copied()
            .filter(|r| r.invoke <= cut)
            .collect();
        if search(&prefix, cut, initial).is_none() {
            let (completed, pending) = prefix.into_iter().partition(|r| r.response <= cut);
            return Ok(Verdict::NotLinearizable(LinearizabilityViolation {
                cut,
                completed,
                pending,
            }));
        }
    }
    unreachable!("the full history failed, so its last cut fails too")
}
