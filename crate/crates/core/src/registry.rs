//! Consume-once nonce registry with sliding expiration.
//!
//! Entries live for a TTL measured in registry time; the registry never reads
//! a clock of its own, every call carries `now`. Expired entries are reclaimed
//! from an expiry-ordered heap at the start of each mutation, so the live
//! count reported by [`NonceStore::stats`] never includes an entry that
//! expired before the most recent operation. [`NonceStore::sweep`] runs the
//! same reclamation for idle periods.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::clock::Timestamp;

/// Estimated footprint of one live entry (key, expiry, index overhead).
pub const DEFAULT_PER_ENTRY_BYTES: u64 = 125;

/// Point-in-time registry counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistryStats {
    pub live_count: u64,
    pub peak_count: u64,
    pub evicted_total: u64,
    pub bytes_estimate: u64,
}

/// Storage behind the verifier's consume-once check.
///
/// Implementations must make [`consume_once`](NonceStore::consume_once)
/// linearizable: among concurrent calls for the same key, exactly one wins
/// while an entry is live.
pub trait NonceStore: Send + Sync {
    /// Inserts `key` with expiry `now + ttl` unless a live entry exists.
    /// Returns whether the insert happened.
    fn consume_once(&self, key: &str, now: Timestamp, ttl: Duration) -> bool;

    /// Removes every entry with expiry `<= now`; returns how many were removed.
    fn sweep(&self, now: Timestamp) -> usize;

    fn stats(&self) -> RegistryStats;
}

#[derive(Debug, Clone, Default)]
struct Inner {
    entries: HashMap<Arc<str>, Timestamp>,
    // Min-heap on expiry; one pair per stored entry.
    expiries: BinaryHeap<Reverse<(Timestamp, Arc<str>)>>,
    peak: usize,
    evicted_total: u64,
}

impl Inner {
    fn evict_expired(&mut self, now: Timestamp) -> usize {
        let mut removed = 0;
        while let Some(Reverse((expiry, _))) = self.expiries.peek() {
            if *expiry > now {
                break;
            }
            let Reverse((expiry, key)) = self.expiries.pop().expect("peeked");
            if self.entries.get(&key) == Some(&expiry) {
                self.entries.remove(&key);
                removed += 1;
            }
        }
        self.evicted_total += removed as u64;
        removed
    }
}

/// In-memory [`NonceStore`] guarded by a single lock.
#[derive(Debug)]
pub struct NonceRegistry {
    inner: Mutex<Inner>,
    per_entry_bytes: u64,
}

impl Default for NonceRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl Clone for NonceRegistry {
    fn clone(&self) -> Self {
        Self {
            inner: Mutex::new(self.inner.lock().clone()),
            per_entry_bytes: self.per_entry_bytes,
        }
    }
}

impl NonceRegistry {
    pub fn new() -> Self {
        Self::with_entry_bytes(DEFAULT_PER_ENTRY_BYTES)
    }

    pub fn with_entry_bytes(per_entry_bytes: u64) -> Self {
        Self {
            inner: Mutex::new(Inner::default()),
            per_entry_bytes,
        }
    }

    pub fn per_entry_bytes(&self) -> u64 {
        self.per_entry_bytes
    }

    /// Stored entries and their expiries, ordered by key.
    pub fn snapshot(&self) -> BTreeMap<String, Timestamp> {
        self.inner
            .lock()
            .entries
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl NonceStore for NonceRegistry {
    fn consume_once(&self, key: &str, now: Timestamp, ttl: Duration) -> bool {
        let mut inner = self.inner.lock();
        // Expired entries (including one for `key`) go first, under the same
        // lock, so a present key is always live.
        inner.evict_expired(now);
        if inner.entries.contains_key(key) {
            return false;
        }
        let expiry = now.saturating_add(ttl.max(Duration::from_millis(1)));
        let key: Arc<str> = Arc::from(key);
        inner.entries.insert(Arc::clone(&key), expiry);
        inner.expiries.push(Reverse((expiry, key)));
        inner.peak = inner.peak.max(inner.entries.len());
        true
    }

    fn sweep(&self, now: Timestamp) -> usize {
        self.inner.lock().evict_expired(now)
    }

    fn stats(&self) -> RegistryStats {
        let inner = self.inner.lock();
        let live = inner.entries.len() as u64;
        RegistryStats {
            live_count: live,
            peak_count: inner.peak as u64,
            evicted_total: inner.evicted_total,
            bytes_estimate: live * self.per_entry_bytes,
        }
    }
}

impl<T: NonceStore + ?Sized> NonceStore for Arc<T> {
    fn consume_once(&self, key: &str, now: Timestamp, ttl: Duration) -> bool {
        (**self).consume_once(key, now, ttl)
    }

    fn sweep(&self, now: Timestamp) -> usize {
        (**self).sweep(now)
    }

    fn stats(&self) -> RegistryStats {
        (**self).stats()
    }
}
