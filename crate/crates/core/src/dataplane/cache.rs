use std::collections::{BTreeMap, HashMap};

use crate::engine::SimTime;
use crate::ids::ContentId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CacheOutcome {
    Hit,
    Miss,
}

/// LRU content cache of unit-sized items.
#[derive(Clone, Debug)]
pub struct CacheState {
    capacity: usize,
    /// Monotone use counter; orders recency even among equal sim times.
    clock: u64,
    by_use: BTreeMap<u64, ContentId>,
    resident: HashMap<ContentId, (u64, SimTime)>,
    hits: u64,
    misses: u64,
}

impl CacheState {
    pub fn new(capacity: usize) -> Self {
        CacheState {
            capacity,
            clock: 0,
            by_use: BTreeMap::new(),
            resident: HashMap::new(),
            hits: 0,
            misses: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.resident.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resident.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    pub fn lookups(&self) -> u64 {
        self.hits + self.misses
    }

    /// Residency test without touching recency or counters.
    pub fn contains(&self, id: ContentId) -> bool {
        self.resident.contains_key(&id)
    }

    pub fn last_use(&self, id: ContentId) -> Option<SimTime> {
        self.resident.get(&id).map(|&(_, t)| t)
    }

    fn touch(&mut self, id: ContentId, now: SimTime) {
        if let Some((seq, _)) = self.resident.remove(&id) {
            self.by_use.remove(&seq);
        }
        self.clock += 1;
        self.by_use.insert(self.clock, id);
        self.resident.insert(id, (self.clock, now));
    }

    pub fn lookup(&mut self, id: ContentId, now: SimTime) -> CacheOutcome {
        if self.contains(id) {
            self.touch(id, now);
            self.hits += 1;
            CacheOutcome::Hit
        } else {
            self.misses += 1;
            CacheOutcome::Miss
        }
    }

    /// Makes `id` resident, evicting and returning the least recently used
    /// item if the cache was full.
    pub fn insert(&mut self, id: ContentId, now: SimTime) -> Option<ContentId> {
        if self.capacity == 0 {
            return None;
        }
        let mut evicted = None;
        if !self.contains(id) && self.resident.len() >= self.capacity {
            let (&seq, &victim) = self.by_use.iter().next().expect("full cache is non-empty");
            self.by_use.remove(&seq);
            self.resident.remove(&victim);
            evicted = Some(victim);
        }
        self.touch(id, now);
        evicted
    }

    /// Resident items from least to most recently used.
    pub fn lru_order(&self) -> Vec<ContentId> {
        self.by_use.values().copied().collect()
    }
}
