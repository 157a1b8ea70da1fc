//! Optional scheduling noise for tests.
//!
//! Algorithms call [`yield_point`] between the steps of their protocols. With
//! noise disabled (the default) this is one thread-local load. Tests turn it
//! on per thread to shake out interleavings even on a single core.

use std::cell::{Cell, RefCell};

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};

thread_local! {
    static YIELD_PERCENT: Cell<u32> = const { Cell::new(0) };
    static NOISE_RNG: RefCell<Option<SmallRng>> = const { RefCell::new(None) };
}

/// Makes every yield point on the calling thread yield with probability
/// `percent`/100. Zero disables.
pub fn set_yield_percent(percent: u32, seed: u64) {
    YIELD_PERCENT.with(|p| p.set(percent.min(100)));
    NOISE_RNG.with(|r| *r.borrow_mut() = Some(SmallRng::seed_from_u64(seed)));
}

#[inline]
pub(crate) fn yield_point() {
    let percent = YIELD_PERCENT.with(Cell::get);
    if percent != 0 {
        noisy_yield(percent);
    }
}

#[cold]
fn noisy_yield(percent: u32) {
    let roll = NOISE_RNG.with(|r| {
        r.borrow_mut()
            .as_mut()
            .map_or(100, |rng| rng.gen_range(0..100))
    });
    if roll < percent {
        std::thread::yield_now();
    }
}
