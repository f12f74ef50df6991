//! File formats, external solvers and the wall clock for `satmap-core`.

pub mod dimacs;
pub mod external;
pub mod format;

use std::time::{Duration, Instant};

use satmap_core::budget::Clock;

/// Monotonic time since construction.
#[derive(Clone, Copy, Debug)]
pub struct WallClock(Instant);

impl WallClock {
    pub fn start() -> Self {
        WallClock(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::start()
    }
}

impl Clock for WallClock {
    fn elapsed(&self) -> Duration {
        self.0.elapsed()
    }
}
