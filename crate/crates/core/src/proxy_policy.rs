//! Object bookkeeping for the caching forward proxy: a size ceiling for
//! cacheability, TTL expiration, and LRU capacity enforcement.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProxyPolicy {
    pub capacity: u64,
    pub max_object_size: u64,
    pub ttl_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyError;

impl fmt::Display for PolicyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "max_object_size must not exceed capacity")
    }
}

impl core::error::Error for PolicyError {}

impl ProxyPolicy {
    pub fn new(capacity: u64, max_object_size: u64, ttl_ms: u64) -> Result<Self, PolicyError> {
        if max_object_size > capacity {
            return Err(PolicyError);
        }
        Ok(ProxyPolicy { capacity, max_object_size, ttl_ms })
    }

    /// Objects above the size ceiling are streamed through, never stored.
    pub fn cacheable(&self, size: u64) -> bool {
        size <= self.max_object_size
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ObjectEntry {
    pub size: u64,
    pub stored_at_ms: u64,
    pub stamp: u64,
}

/// Lookup outcome for a cached object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lookup {
    /// Stored and within TTL; the entry was touched.
    Fresh,
    /// Stored but past TTL; the entry was removed (refetch as a miss).
    Expired,
    Absent,
}

#[derive(Debug, Clone)]
pub struct ObjectLedger {
    policy: ProxyPolicy,
    entries: BTreeMap<String, ObjectEntry>,
    usage: u64,
    next_stamp: u64,
}

impl ObjectLedger {
    pub fn new(policy: ProxyPolicy) -> Self {
        ObjectLedger { policy, entries: BTreeMap::new(), usage: 0, next_stamp: 1 }
    }

    pub fn policy(&self) -> &ProxyPolicy {
        &self.policy
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

    pub fn entry(&self, key: &str) -> Option<&ObjectEntry> {
        self.entries.get(key)
    }

    pub fn lookup(&mut self, key: &str, now_ms: u64) -> Lookup {
        let Some(entry) = self.entries.get_mut(key) else {
            return Lookup::Absent;
        };
        if now_ms.saturating_sub(entry.stored_at_ms) > self.policy.ttl_ms {
            let removed = self.entries.remove(key).expect("entry just observed");
            self.usage -= removed.size;
            return Lookup::Expired;
        }
        entry.stamp = self.next_stamp;
        self.next_stamp += 1;
        Lookup::Fresh
    }

    /// Records a freshly fetched object (the caller checked
    /// [`ProxyPolicy::cacheable`]) and returns any LRU victims removed to
    /// stay within capacity.
    pub fn insert(&mut self, key: String, size: u64, now_ms: u64) -> Vec<String> {
        debug_assert!(self.policy.cacheable(size));
        if let Some(old) = self.entries.remove(&key) {
            self.usage -= old.size;
        }
        let stamp = self.next_stamp;
        self.next_stamp += 1;
        self.entries.insert(key, ObjectEntry { size, stored_at_ms: now_ms, stamp });
        self.usage += size;
        self.enforce_capacity()
    }

    /// Removes every object past TTL, then enforces capacity by LRU.
    /// Returns `(expired keys, lru-evicted keys)`.
    pub fn expire_sweep(&mut self, now_ms: u64) -> (Vec<String>, Vec<String>) {
        let expired: Vec<String> = self
            .entries
            .iter()
            .filter(|(_, e)| now_ms.saturating_sub(e.stored_at_ms) > self.policy.ttl_ms)
            .map(|(k, _)| k.clone())
            .collect();
        for key in &expired {
            let e = self.entries.remove(key).expect("expired key just listed");
            self.usage -= e.size;
        }
        (expired, self.enforce_capacity())
    }

    fn enforce_capacity(&mut self) -> Vec<String> {
        let mut victims = Vec::new();
        while self.usage > self.policy.capacity {
            let oldest = self
                .entries
                .iter()
                .min_by_key(|(_, e)| e.stamp)
                .map(|(k, _)| k.clone())
                .expect("usage > 0 implies entries exist");
            let e = self.entries.remove(&oldest).expect("oldest key exists");
            self.usage -= e.size;
            victims.push(oldest);
        }
        victims
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn ledger(capacity: u64, max_object: u64, ttl_ms: u64) -> ObjectLedger {
        ObjectLedger::new(ProxyPolicy::new(capacity, max_object, ttl_ms).unwrap())
    }

    #[test]
    fn policy_validates_size_ceiling() {
        assert!(ProxyPolicy::new(100, 200, 1000).is_err());
        assert!(ProxyPolicy::new(100, 100, 1000).is_ok());
    }

    #[test]
    fn fresh_hit_then_expiry() {
        let mut l = ledger(1000, 500, 300);
        l.insert("u".to_string(), 10, 0);
        assert_eq!(l.lookup("u", 299), Lookup::Fresh);
        assert_eq!(l.lookup("u", 301), Lookup::Expired);
        // Expired lookup deletes the object.
        assert_eq!(l.lookup("u", 302), Lookup::Absent);
        assert_eq!(l.usage(), 0);
    }

    #[test]
    fn sweep_counts_only_stale_objects() {
        let mut l = ledger(1000, 500, 100);
        for (i, at) in [0u64, 10, 20, 500, 510].iter().enumerate() {
            l.insert(alloc::format!("k{i}"), 10, *at);
        }
        let (expired, lru) = l.expire_sweep(550);
        assert_eq!(expired.len(), 3);
        assert!(lru.is_empty());
        assert_eq!(l.len(), 2);
    }

    #[test]
    fn capacity_enforced_by_lru() {
        let mut l = ledger(100, 100, 10_000);
        l.insert("a".to_string(), 40, 0);
        l.insert("b".to_string(), 40, 1);
        // Touch "a" so "b" is the LRU victim.
        assert_eq!(l.lookup("a", 2), Lookup::Fresh);
        let victims = l.insert("c".to_string(), 40, 3);
        assert_eq!(victims, vec!["b".to_string()]);
        assert_eq!(l.usage(), 80);
    }

    #[test]
    fn all_fresh_sweep_evicts_nothing() {
        let mut l = ledger(1000, 500, 1_000);
        l.insert("a".to_string(), 10, 0);
        let (expired, lru) = l.expire_sweep(500);
        assert!(expired.is_empty() && lru.is_empty());
    }
}
