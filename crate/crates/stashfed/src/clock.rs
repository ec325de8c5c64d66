//! Millisecond clock used by the TTL- and staleness-sensitive services.
//! Tests swap in a manual clock to make expiry deterministic.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Clone)]
pub enum Clock {
    System,
    Manual(Arc<AtomicU64>),
}

impl Clock {
    pub fn system() -> Self {
        Clock::System
    }

    /// A manually driven clock starting at `start_ms`, plus the handle
    /// that advances it.
    pub fn manual(start_ms: u64) -> (Self, ManualClock) {
        let cell = Arc::new(AtomicU64::new(start_ms));
        (Clock::Manual(cell.clone()), ManualClock(cell))
    }

    pub fn now_ms(&self) -> u64 {
        match self {
            Clock::System => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .expect("system clock before epoch")
                .as_millis() as u64,
            Clock::Manual(cell) => cell.load(Ordering::SeqCst),
        }
    }
}

impl std::fmt::Debug for Clock {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Clock::System => write!(f, "Clock::System"),
            Clock::Manual(c) => write!(f, "Clock::Manual({})", c.load(Ordering::SeqCst)),
        }
    }
}

#[derive(Clone)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn advance_ms(&self, delta: u64) {
        self.0.fetch_add(delta, Ordering::SeqCst);
    }

    pub fn set_ms(&self, now: u64) {
        self.0.store(now, Ordering::SeqCst);
    }
}

/// Seconds since the Unix epoch, for catalog mtimes and telemetry
/// timestamps.
pub fn epoch_seconds() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("system clock before epoch")
        .as_secs()
}
