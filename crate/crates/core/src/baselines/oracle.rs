use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Add,
    Remove,
    Contains,
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OpKind::Add => "add",
            OpKind::Remove => "remove",
            OpKind::Contains => "contains",
        })
    }
}

/// Exact sequential set, the ground truth for replays.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OracleSet {
    keys: HashSet<u64>,
}

impl OracleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn apply(&mut self, op: OpKind, key: u64) -> bool {
        match op {
            OpKind::Add => self.keys.insert(key),
            OpKind::Remove => self.keys.remove(&key),
            OpKind::Contains => self.keys.contains(&key),
        }
    }

    pub fn contains(&self, key: u64) -> bool {
        self.keys.contains(&key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &HashSet<u64> {
        &self.keys
    }
}
