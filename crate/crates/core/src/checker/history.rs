use std::fmt;
use std::sync::atomic::AtomicU64;
use std::sync::atomic::Ordering::SeqCst;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::baselines::OpKind;
use crate::set::ConcurrentSet;

/// One completed operation. Stamps come from a clock shared by all threads
/// of a recording, so `response < invoke'` means real-time precedence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpRecord {
    pub thread: usize,
    pub op: OpKind,
    pub key: u64,
    pub result: bool,
    pub invoke: u64,
    pub response: u64,
}

impl OpRecord {
    pub fn precedes(&self, other: &OpRecord) -> bool {
        self.response < other.invoke
    }
}

impl fmt::Display for OpRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t{} [{:>4}, {:>4}] {}({}) -> {}",
            self.thread, self.invoke, self.response, self.op, self.key, self.result
        )
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<OpRecord>,
}

impl History {
    /// Merges per-thread logs, ordered by invocation.
    pub fn from_threads(logs: impl IntoIterator<Item = Vec<OpRecord>>) -> Self {
        let mut records: Vec<OpRecord> = logs.into_iter().flatten().collect();
        records.sort_by_key(|r| r.invoke);
        History { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Stamps are increasing and each thread's operations do not overlap.
    pub fn is_well_formed(&self) -> bool {
        let mut last: std::collections::HashMap<usize, u64> = Default::default();
        let mut sorted = self.records.clone();
        sorted.sort_by_key(|r| r.invoke);
        sorted.iter().all(|r| {
            let ok =
                r.invoke < r.response && last.get(&r.thread).is_none_or(|&prev| prev < r.invoke);
            last.insert(r.thread, r.response);
            ok
        })
    }
}

impl fmt::Display for History {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Shared logical clock for one recording.
#[derive(Clone, Debug, Default)]
pub struct Recorder {
    clock: Arc<AtomicU64>,
}

impl Recorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn thread(&self, thread: usize) -> ThreadLog {
        ThreadLog {
            thread,
            clock: self.clock.clone(),
            records: Vec::new(),
        }
    }
}

/// Per-thread buffer of records.
#[derive(Debug)]
pub struct ThreadLog {
    thread: usize,
    clock: Arc<AtomicU64>,
    records: Vec<OpRecord>,
}

impl ThreadLog {
    /// Runs `op(key)` against `set` and records it. A saturated add changed
    /// nothing and is not recorded; it returns `None`.
    pub fn apply<S: ConcurrentSet + ?Sized>(
        &mut self,
        set: &S,
        op: OpKind,
        key: u64,
    ) -> Option<bool> {
        let invoke = self.clock.fetch_add(1, SeqCst);
        let result = match op {
            OpKind::Add => set.add(key).ok()?,
            OpKind::Remove => set.remove(key),
            OpKind::Contains => set.contains(key),
        };
        let response = self.clock.fetch_add(1, SeqCst);
        self.records.push(OpRecord {
            thread: self.thread,
            op,
            key,
            result,
            invoke,
            response,
        });
        Some(result)
    }

    pub fn records(&self) -> &[OpRecord] {
        &self.records
    }

    pub fn finish(self) -> Vec<OpRecord> {
        self.records
    }
}
