use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default neighborhood width: one machine word of bit-mask.
pub const DEFAULT_NEIGHBORHOOD: usize = 64;
/// Default linear-probe limit when claiming an empty bucket.
pub const DEFAULT_MAX_DISTANCE: usize = 512;
pub const DEFAULT_SEED: u64 = 0x243f_6a88_85a3_08d3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableConfig {
    /// Number of buckets; a power of two.
    pub capacity: usize,
    /// Neighborhood width `H` (bits in each bit-mask).
    pub neighborhood: usize,
    /// Claims further than this from the home bucket fail as saturated.
    pub max_distance: usize,
    pub seed: u64,
    /// Check for the key before claiming a bucket in `add`.
    pub prescan: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("capacity {0} is not a power of two >= 2")]
    Capacity(usize),
    #[error("neighborhood {0} must be in 1..=64")]
    Neighborhood(usize),
    #[error("max_distance {max_distance} must satisfy neighborhood ({neighborhood}) <= max_distance <= capacity ({capacity})")]
    MaxDistance {
        neighborhood: usize,
        max_distance: usize,
        capacity: usize,
    },
}

impl TableConfig {
    /// Defaults for `capacity`, with the neighborhood and probe limit clamped
    /// to the table size.
    pub fn with_capacity(capacity: usize) -> Self {
        TableConfig {
            capacity,
            neighborhood: DEFAULT_NEIGHBORHOOD.min(capacity),
            max_distance: DEFAULT_MAX_DISTANCE.min(capacity),
            seed: DEFAULT_SEED,
            prescan: true,
        }
    }

    pub fn neighborhood(mut self, h: usize) -> Self {
        self.neighborhood = h;
        self
    }

    pub fn max_distance(mut self, d: usize) -> Self {
        self.max_distance = d;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn prescan(mut self, on: bool) -> Self {
        self.prescan = on;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.capacity < 2 || !self.capacity.is_power_of_two() {
            return Err(ConfigError::Capacity(self.capacity));
        }
        if self.neighborhood == 0 || self.neighborhood > 64 {
            return Err(ConfigError::Neighborhood(self.neighborhood));
        }
        if self.max_distance < self.neighborhood || self.max_distance > self.capacity {
            return Err(ConfigError::MaxDistance {
                neighborhood: self.neighborhood,
                max_distance: self.max_distance,
                capacity: self.capacity,
            });
        }
        Ok(())
    }
}
