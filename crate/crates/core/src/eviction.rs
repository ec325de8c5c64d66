//! Watermark LRU bookkeeping for a cache's storage.
//!
//! The ledger tracks per-file byte usage, a strictly monotonic access
//! stamp (so LRU order is a total order, never tied), and reader pins.
//! Eviction planning is pure: it returns the victims, and the caller
//! removes the bytes.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::path::FederationPath;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LedgerConfigError {
    BadWatermarks { high: f64, low: f64 },
    ZeroCapacity,
}

impl fmt::Display for LedgerConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LedgerConfigError::BadWatermarks { high, low } => {
                write!(f, "watermarks must satisfy 0 < low < high <= 1 (got low={low}, high={high})")
            }
            LedgerConfigError::ZeroCapacity => write!(f, "capacity must be positive"),
        }
    }
}

impl core::error::Error for LedgerConfigError {}

/// Nothing evictable remains and the incoming bytes cannot fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheFull {
    pub needed: u64,
    pub usage: u64,
    pub capacity: u64,
}

impl fmt::Display for CacheFull {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "cache full: {} bytes needed, {} of {} in use and nothing evictable",
            self.needed, self.usage, self.capacity
        )
    }
}

impl core::error::Error for CacheFull {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerEntry {
    pub bytes: u64,
    /// Monotonic access stamp; smaller means least recently used.
    pub stamp: u64,
    /// Active readers plus in-flight fetches; pinned entries are never
    /// evicted.
    pub pins: u32,
}

#[derive(Debug, Clone)]
pub struct WatermarkLru {
    capacity: u64,
    high: f64,
    low: f64,
    next_stamp: u64,
    usage: u64,
    evictions: u64,
    entries: BTreeMap<FederationPath, LedgerEntry>,
}

impl WatermarkLru {
    pub fn new(capacity: u64, high: f64, low: f64) -> Result<Self, LedgerConfigError> {
        if capacity == 0 {
            return Err(LedgerConfigError::ZeroCapacity);
        }
        if !(low > 0.0 && low < high && high <= 1.0) {
            return Err(LedgerConfigError::BadWatermarks { high, low });
        }
        Ok(WatermarkLru {
            capacity,
            high,
            low,
            next_stamp: 1,
            usage: 0,
            evictions: 0,
            entries: BTreeMap::new(),
        })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn usage(&self) -> u64 {
        self.usage
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn eviction_count(&self) -> u64 {
        self.evictions
    }

    pub fn high_bytes(&self) -> u64 {
        (self.capacity as f64 * self.high) as u64
    }

    pub fn low_bytes(&self) -> u64 {
        (self.capacity as f64 * self.low) as u64
    }

    pub fn entry(&self, path: &FederationPath) -> Option<&LedgerEntry> {
        self.entries.get(path)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FederationPath, &LedgerEntry)> {
        self.entries.iter()
    }

    /// Creates the entry if absent and marks it most recently used.
    pub fn touch(&mut self, path: &FederationPath) {
        let stamp = self.next_stamp;
        self.next_stamp += 1;
        self.entries
            .entry(path.clone())
            .and_modify(|e| e.stamp = stamp)
            .or_insert(LedgerEntry { bytes: 0, stamp, pins: 0 });
    }

    /// Accounts bytes committed for `path` (which must exist).
    pub fn add_bytes(&mut self, path: &FederationPath, delta: u64) {
        let entry = self.entries.get_mut(path).expect("add_bytes on unknown entry");
        entry.bytes += delta;
        self.usage += delta;
    }

    pub fn pin(&mut self, path: &FederationPath) {
        if let Some(e) = self.entries.get_mut(path) {
            e.pins += 1;
        }
    }

    pub fn unpin(&mut self, path: &FederationPath) {
        if let Some(e) = self.entries.get_mut(path) {
            e.pins = e.pins.saturating_sub(1);
        }
    }

    /// Drops an entry (invalidation, not eviction) and returns its bytes.
    pub fn remove(&mut self, path: &FederationPath) -> u64 {
        match self.entries.remove(path) {
            Some(e) => {
                self.usage -= e.bytes;
                e.bytes
            }
            None => 0,
        }
    }

    /// True when committing `incoming` more bytes would cross the high
    /// watermark, i.e. eviction must run first.
    pub fn over_high(&self, incoming: u64) -> bool {
        self.usage + incoming > self.high_bytes()
    }

    /// Plans an eviction batch for `incoming` bytes without applying it.
    ///
    /// Victims are whole entries in ascending stamp order, skipping pinned
    /// entries, until usage drops to the low watermark (or far enough that
    /// `incoming` fits within capacity, whichever is lower). Errors when
    /// even evicting everything evictable cannot fit `incoming`.
    pub fn plan_eviction(&self, incoming: u64) -> Result<Vec<FederationPath>, CacheFull> {
        let target = self.low_bytes().min(self.capacity.saturating_sub(incoming));
        let mut candidates: Vec<(&FederationPath, &LedgerEntry)> =
            self.entries.iter().filter(|(_, e)| e.pins == 0).collect();
        candidates.sort_by_key(|(_, e)| e.stamp);

        let mut projected = self.usage;
        let mut victims = Vec::new();
        for (path, entry) in candidates {
            if projected <= target {
                break;
            }
            projected -= entry.bytes;
            victims.push(path.clone());
        }
        if projected + incoming > self.capacity {
            return Err(CacheFull { needed: incoming, usage: projected, capacity: self.capacity });
        }
        Ok(victims)
    }

    /// Plans and applies an eviction batch, returning `(path, freed bytes)`
    /// per victim so the caller can delete the stored data.
    pub fn evict_for(&mut self, incoming: u64) -> Result<Vec<(FederationPath, u64)>, CacheFull> {
        let victims = self.plan_eviction(incoming)?;
        let mut freed = Vec::with_capacity(victims.len());
        for path in victims {
            let bytes = self.remove(&path);
            self.evictions += 1;
            freed.push((path, bytes));
        }
        Ok(freed)
    }
}
