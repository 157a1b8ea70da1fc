use std::fmt;

use serde::{Deserialize, Serialize};

/// Lifecycle of a bucket.
///
/// `Visible` is kept for completeness but never entered: fixed neighborhoods
/// make the probe-bound publication step it exists for unnecessary.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BucketState {
    Empty = 0,
    Busy = 1,
    Collided = 2,
    Visible = 3,
    Inserting = 4,
    Member = 5,
}

impl BucketState {
    const fn from_bits(bits: u64) -> Self {
        match bits & STATE_MASK {
            0 => BucketState::Empty,
            1 => BucketState::Busy,
            2 => BucketState::Collided,
            3 => BucketState::Visible,
            4 => BucketState::Inserting,
            _ => BucketState::Member,
        }
    }

    /// States that must not survive past quiescence.
    pub fn is_transient(self) -> bool {
        matches!(
            self,
            BucketState::Busy
                | BucketState::Collided
                | BucketState::Visible
                | BucketState::Inserting
        )
    }
}

const STATE_BITS: u32 = 3;
const STATE_MASK: u64 = (1 << STATE_BITS) - 1;

/// `(version, state)` packed into the 62 value bits of a K-CAS word.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct VersionedState {
    pub version: u64,
    pub state: BucketState,
}

impl VersionedState {
    /// Versions wrap within the bits left after the state and K-CAS tag.
    pub const VERSION_MASK: u64 = (1 << (62 - STATE_BITS)) - 1;

    pub const fn new(version: u64, state: BucketState) -> Self {
        VersionedState {
            version: version & Self::VERSION_MASK,
            state,
        }
    }

    pub const fn pack(self) -> u64 {
        (self.version << STATE_BITS) | self.state as u64
    }

    pub const fn unpack(word: u64) -> Self {
        VersionedState {
            version: word >> STATE_BITS,
            state: BucketState::from_bits(word),
        }
    }

    pub const fn with_state(self, state: BucketState) -> Self {
        VersionedState {
            version: self.version,
            state,
        }
    }

    pub const fn bumped(self, state: BucketState) -> Self {
        VersionedState::new(self.version + 1, state)
    }
}

impl fmt::Debug for VersionedState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{v{}, {:?}}}", self.version, self.state)
    }
}
