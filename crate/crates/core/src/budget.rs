//! Wall-clock budgets without depending on an OS clock.

use core::time::Duration;

/// Time elapsed since some fixed origin.
pub trait Clock {
    fn elapsed(&self) -> Duration;
}

/// A clock that never advances; budgets built on it never expire.
#[derive(Clone, Copy, Debug, Default)]
pub struct FrozenClock;

impl Clock for FrozenClock {
    fn elapsed(&self) -> Duration {
        Duration::ZERO
    }
}

#[derive(Clone, Copy)]
pub struct Budget<'a> {
    clock: &'a dyn Clock,
    deadline: Option<Duration>,
}

impl<'a> Budget<'a> {
    /// Expires once `clock` reaches `deadline`.
    pub fn until(clock: &'a dyn Clock, deadline: Duration) -> Self {
        Budget { clock, deadline: Some(deadline) }
    }

    pub fn unlimited() -> Budget<'static> {
        Budget { clock: &FrozenClock, deadline: None }
    }

    /// No deadline, but elapsed time is still measured on `clock`.
    pub fn measured(clock: &'a dyn Clock) -> Self {
        Budget { clock, deadline: None }
    }

    pub fn elapsed(&self) -> Duration {
        self.clock.elapsed()
    }

    pub fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| self.clock.elapsed() >= d)
    }

    pub fn remaining(&self) -> Option<Duration> {
        self.deadline.map(|d| d.saturating_sub(self.clock.elapsed()))
    }
}

impl core::fmt::Debug for Budget<'_> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Budget").field("elapsed", &self.elapsed()).field("deadline", &self.deadline).finish()
    }
}
