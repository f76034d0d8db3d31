//! Virtual clock in milliseconds.
//!
//! All stamps, time events and request timeouts in the kernel are taken from
//! this clock; wall time is never consulted.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Virtual milliseconds since the start of the simulated day.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Stamp(pub u64);

impl Stamp {
    pub const ZERO: Stamp = Stamp(0);

    pub fn from_hm(hour: u64, minute: u64) -> Stamp {
        Stamp((hour * 60 + minute) * 60_000)
    }

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn saturating_add(self, ms: u64) -> Stamp {
        Stamp(self.0.saturating_add(ms))
    }
}

impl fmt::Display for Stamp {
    /// `HH:MM:SS.mmm`, days beyond the first roll the hour past 24.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ms = self.0 % 1000;
        let s = self.0 / 1000;
        write!(f, "{:02}:{:02}:{:02}.{:03}", s / 3600, (s / 60) % 60, s % 60, ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("virtual clock cannot move backward from {now} to {requested}")]
pub struct ClockError {
    pub now: Stamp,
    pub requested: Stamp,
}

/// Shared monotone clock. Clones observe the same time.
#[derive(Debug, Clone, Default)]
pub struct VirtualClock {
    now: Arc<AtomicU64>,
}

impl VirtualClock {
    pub fn new(start: Stamp) -> Self {
        Self { now: Arc::new(AtomicU64::new(start.0)) }
    }

    pub fn now(&self) -> Stamp {
        Stamp(self.now.load(Ordering::Acquire))
    }

    pub fn advance_to(&self, t: Stamp) -> Result<Stamp, ClockError> {
        let mut cur = self.now.load(Ordering::Acquire);
        loop {
            if t.0 < cur {
                return Err(ClockError { now: Stamp(cur), requested: t });
            }
            match self.now.compare_exchange(cur, t.0, Ordering::AcqRel, Ordering::Acquire) {
                Ok(_) => return Ok(t),
                Err(actual) => cur = actual,
            }
        }
    }

    pub fn advance_by(&self, ms: u64) -> Stamp {
        Stamp(self.now.fetch_add(ms, Ordering::AcqRel) + ms)
    }
}
