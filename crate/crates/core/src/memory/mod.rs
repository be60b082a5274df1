//! Bounded exemplar memory.
//!
//! Every stored exemplar carries a descriptor, the identity it was enrolled
//! under, an eligibility in `(0, 1]` and an age counting the update cycles
//! since it was last matched. Matched exemplars have their eligibility
//! multiplied by a decay factor below one and are dropped once it falls under
//! the removal threshold; when the store still overflows its capacity, the
//! least recently used exemplars are evicted.
//!
//! Descriptors live in one row-major buffer so the matcher can scan the whole
//! memory as a single contiguous batch.

mod snapshot;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use snapshot::{read_snapshot, write_snapshot};

/// Identity number. Allocated in increasing order and never reused.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdentityId(pub u64);

/// Unique insertion counter of a stored exemplar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemKey(pub u64);

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ItemKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bookkeeping attached to one stored descriptor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItemMeta {
    pub key: ItemKey,
    pub identity: IdentityId,
    pub eligibility: f64,
    pub age: u64,
}

/// Owned copy of a stored exemplar.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryItem {
    pub key: ItemKey,
    pub identity: IdentityId,
    pub eligibility: f64,
    pub age: u64,
    pub descriptor: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StoreConfig {
    pub dimension: usize,
    pub capacity: usize,
    /// Eligibility below which an exemplar is removed.
    pub e_bar: f64,
    /// L2-normalize descriptors on insertion. Disabled for 1-D simulations.
    pub normalize: bool,
}

impl StoreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if self.capacity == 0 {
            return Err(Error::Config("capacity must be positive".into()));
        }
        if !(self.e_bar > 0.0 && self.e_bar < 1.0) {
            return Err(Error::Config(format!(
                "e_bar must lie in (0, 1), got {}",
                self.e_bar
            )));
        }
        Ok(())
    }
}

/// Result of a single insertion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Inserted {
    pub key: ItemKey,
    /// Exemplars evicted because the insertion overflowed the capacity.
    pub evicted: Vec<ItemKey>,
}

/// Read-only summary of the store.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MemoryStats {
    pub size: usize,
    pub per_identity: BTreeMap<IdentityId, usize>,
    /// Counts per eligibility decile; decile 9 holds `[0.9, 1.0]`.
    pub eligibility_histogram: BTreeMap<u8, usize>,
    pub age_histogram: BTreeMap<u64, usize>,
}

/// Validates a descriptor against `dimension`, optionally L2-normalizing it.
pub fn prepare_descriptor(raw: &[f64], dimension: usize, normalize: bool) -> Result<Vec<f64>> {
    if raw.len() != dimension {
        return Err(Error::Dimension {
            expected: dimension,
            found: raw.len(),
        });
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    if !normalize {
        return Ok(raw.to_vec());
    }
    let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok(raw.iter().map(|v| v / norm).collect())
}

#[derive(Clone, Debug)]
pub struct MemoryStore {
    config: StoreConfig,
    descriptors: Vec<f64>,
    meta: Vec<ItemMeta>,
    slots: HashMap<ItemKey, usize>,
    next_id: u64,
    next_key: u64,
}

impl MemoryStore {
    pub fn new(config: StoreConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            descriptors: Vec::new(),
            meta: Vec::new(),
            slots: HashMap::new(),
            next_id: 0,
            next_key: 0,
        })
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn capacity(&self) -> usize {
        self.config.capacity
    }

    pub fn e_bar(&self) -> f64 {
        self.config.e_bar
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn next_id(&self) -> IdentityId {
        IdentityId(self.next_id)
    }

    pub fn next_key(&self) -> ItemKey {
        ItemKey(self.next_key)
    }

    /// Row-major `len() x dimension()` descriptor block, in storage order.
    pub fn descriptors(&self) -> &[f64] {
        &self.descriptors
    }

    /// Metadata in the same storage order as [`Self::descriptors`].
    pub fn metas(&self) -> &[ItemMeta] {
        &self.meta
    }

    pub fn descriptor_at(&self, slot: usize) -> &[f64] {
        let d = self.config.dimension;
        &self.descriptors[slot * d..(slot + 1) * d]
    }

    pub fn contains(&self, key: ItemKey) -> bool {
        self.slots.contains_key(&key)
    }

    pub fn meta(&self, key: ItemKey) -> Option<&ItemMeta> {
        self.slots.get(&key).map(|&slot| &self.meta[slot])
    }

    pub fn get(&self, key: ItemKey) -> Option<MemoryItem> {
        self.slots.get(&key).map(|&slot| self.item_at(slot))
    }

    fn item_at(&self, slot: usize) -> MemoryItem {
        let m = self.meta[slot];
        MemoryItem {
            key: m.key,
            identity: m.identity,
            eligibility: m.eligibility,
            age: m.age,
            descriptor: self.descriptor_at(slot).to_vec(),
        }
    }

    /// All stored exemplars ordered by item key.
    pub fn items(&self) -> Vec<MemoryItem> {
        let mut slots: Vec<usize> = (0..self.meta.len()).collect();
        slots.sort_by_key(|&s| self.meta[s].key);
        slots.into_iter().map(|s| self.item_at(s)).collect()
    }

    /// Reserves a fresh identity number.
    pub fn allocate_identity(&mut self) -> IdentityId {
        let id = IdentityId(self.next_id);
        self.next_id += 1;
        id
    }

    /// Stores `descriptor` under `identity` with eligibility 1 and age 0.
    ///
    /// `identity` must already have been allocated, or be exactly the next
    /// unused number (which is then allocated). Evicts on overflow.
    pub fn insert(&mut self, descriptor: &[f64], identity: IdentityId) -> Result<Inserted> {
        if identity.0 > self.next_id {
            return Err(Error::UnallocatedIdentity(identity));
        }
        let descriptor =
            prepare_descriptor(descriptor, self.config.dimension, self.config.normalize)?;
        if identity.0 == self.next_id {
            self.next_id += 1;
        }
        let key = ItemKey(self.next_key);
        self.next_key += 1;
        self.push_raw(ItemMeta {
            key,
            identity,
            eligibility: 1.0,
            age: 0,
        }, &descriptor);
        let evicted = self.evict_overflow();
        Ok(Inserted { key, evicted })
    }

    fn push_raw(&mut self, meta: ItemMeta, descriptor: &[f64]) {
        self.slots.insert(meta.key, self.meta.len());
        self.meta.push(meta);
        self.descriptors.extend_from_slice(descriptor);
    }

    /// Multiplies the eligibility of every listed item by its decay factor and
    /// resets its age. Items that drop below the removal threshold are removed
    /// and returned in input order.
    ///
    /// The whole batch is validated before anything is modified.
    pub fn decay_and_touch(&mut self, matches: &[(ItemKey, f64)]) -> Result<Vec<ItemKey>> {
        for &(key, eta) in matches {
            if !(eta > 0.0 && eta < 1.0) {
                return Err(Error::Contraction { eta });
            }
            if !self.slots.contains_key(&key) {
                return Err(Error::UnknownItem(key));
            }
        }
        let mut removed = Vec::new();
        for &(key, eta) in matches {
            // Duplicates in the batch may already have removed the item.
            let Some(&slot) = self.slots.get(&key) else {
                continue;
            };
            let m = &mut self.meta[slot];
            m.eligibility *= eta;
            m.age = 0;
            if m.eligibility < self.config.e_bar {
                self.remove_slot(slot);
                removed.push(key);
            }
        }
        Ok(removed)
    }

    /// Increments the age of every item not in `matched`.
    pub fn age_unmatched(&mut self, matched: &HashSet<ItemKey>) {
        for m in &mut self.meta {
            if !matched.contains(&m.key) {
                m.age += 1;
            }
        }
    }

    /// Evicts least recently used items until the store fits its capacity.
    ///
    /// Victim order: largest age, then lowest eligibility, then lowest key.
    pub fn evict_overflow(&mut self) -> Vec<ItemKey> {
        let mut evicted = Vec::new();
        while self.meta.len() > self.config.capacity {
            let victim = (0..self.meta.len())
                .min_by(|&a, &b| {
                    let (ma, mb) = (&self.meta[a], &self.meta[b]);
                    mb.age
                        .cmp(&ma.age)
                        .then(ma.eligibility.total_cmp(&mb.eligibility))
                        .then(ma.key.cmp(&mb.key))
                })
                .expect("store is over capacity, so non-empty");
            evicted.push(self.meta[victim].key);
            self.remove_slot(victim);
        }
        evicted
    }

    /// Removes every item whose eligibility is below the threshold.
    pub fn sweep(&mut self) -> Vec<ItemKey> {
        let mut doomed: Vec<ItemKey> = self
            .meta
            .iter()
            .filter(|m| m.eligibility < self.config.e_bar)
            .map(|m| m.key)
            .collect();
        doomed.sort();
        for &key in &doomed {
            self.remove(key);
        }
        doomed
    }

    pub fn remove(&mut self, key: ItemKey) -> bool {
        match self.slots.get(&key) {
            Some(&slot) => {
                self.remove_slot(slot);
                true
            }
            None => false,
        }
    }

    fn remove_slot(&mut self, slot: usize) {
        let d = self.config.dimension;
        let last = self.meta.len() - 1;
        let key = self.meta[slot].key;
        self.slots.remove(&key);
        if slot != last {
            self.descriptors.copy_within(last * d..(last + 1) * d, slot * d);
            let moved = self.meta[last].key;
            self.slots.insert(moved, slot);
        }
        self.meta.swap_remove(slot);
        self.descriptors.truncate(last * d);
    }

    pub fn stats(&self) -> MemoryStats {
        let mut stats = MemoryStats {
            size: self.meta.len(),
            ..MemoryStats::default()
        };
        for m in &self.meta {
            *stats.per_identity.entry(m.identity).or_default() += 1;
            let decile = ((m.eligibility * 10.0).floor() as i64).clamp(0, 9) as u8;
            *stats.eligibility_histogram.entry(decile).or_default() += 1;
            *stats.age_histogram.entry(m.age).or_default() += 1;
        }
        stats
    }

    /// Rebuilds a store from exported parts. Used by snapshot import.
    pub(crate) fn from_parts(
        config: StoreConfig,
        items: Vec<MemoryItem>,
        next_id: u64,
        next_key: u64,
    ) -> Result<Self> {
        let mut store = Self::new(config)?;
        for item in items {
            if item.descriptor.len() != config.dimension {
                return Err(Error::Dimension {
                    expected: config.dimension,
                    found: item.descriptor.len(),
                });
            }
            if item.key.0 >= next_key || item.identity.0 >= next_id {
                return Err(Error::Schema(format!(
                    "item {} is inconsistent with next_id/next_key",
                    item.key
                )));
            }
            if store.slots.contains_key(&item.key) {
                return Err(Error::Schema(format!("duplicate item key {}", item.key)));
            }
            if !(item.eligibility > 0.0 && item.eligibility <= 1.0) {
                return Err(Error::Schema(format!(
                    "item {} has eligibility {} outside (0, 1]",
                    item.key, item.eligibility
                )));
            }
            store.push_raw(
                ItemMeta {
                    key: item.key,
                    identity: item.identity,
                    eligibility: item.eligibility,
                    age: item.age,
                },
                &item.descriptor,
            );
        }
        store.next_id = next_id;
        store.next_key = next_key;
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(capacity: usize) -> MemoryStore {
        MemoryStore::new(StoreConfig {
            dimension: 3,
            capacity,
            e_bar: 0.5,
            normalize: true,
        })
        .unwrap()
    }

    fn set_age(store: &mut MemoryStore, key: ItemKey, age: u64) {
        let slot = store.slots[&key];
        store.meta[slot].age = age;
    }

    fn set_eligibility(store: &mut MemoryStore, key: ItemKey, e: f64) {
        let slot = store.slots[&key];
        store.meta[slot].eligibility = e;
    }

    #[test]
    fn insert_into_empty_store() {
        let mut s = store(4);
        let ins = s.insert(&[1.0, 0.0, 0.0], IdentityId(0)).unwrap();
        assert_eq!(s.len(), 1);
        let m = s.meta(ins.key).unwrap();
        assert_eq!(m.eligibility, 1.0);
        assert_eq!(m.age, 0);
        assert_eq!(s.next_id(), IdentityId(1));
        assert!(ins.evicted.is_empty());
    }

    #[test]
    fn insert_normalizes_and_rejects_bad_input() {
        let mut s = store(4);
        let ins = s.insert(&[3.0, 4.0, 0.0], IdentityId(0)).unwrap();
        assert_eq!(s.get(ins.key).unwrap().descriptor, vec![0.6, 0.8, 0.0]);
        assert!(matches!(
            s.insert(&[1.0, 0.0], IdentityId(0)),
            Err(Error::Dimension { expected: 3, found: 2 })
        ));
        assert!(matches!(
            s.insert(&[0.0, 0.0, 0.0], IdentityId(0)),
            Err(Error::ZeroVector)
        ));
        assert!(matches!(
            s.insert(&[1.0, 0.0, 0.0], IdentityId(7)),
            Err(Error::UnallocatedIdentity(IdentityId(7)))
        ));
        assert_eq!(s.len(), 1);
        assert_eq!(s.next_key(), ItemKey(1));
    }

    #[test]
    fn overflow_evicts_the_oldest_item() {
        let mut s = store(4);
        let keys: Vec<ItemKey> = (0..4)
            .map(|i| s.insert(&[1.0, i as f64, 0.0], IdentityId(i)).unwrap().key)
            .collect();
        for (key, age) in keys.iter().zip([3, 0, 1, 2]) {
            set_age(&mut s, *key, age);
        }
        let ins = s.insert(&[0.0, 0.0, 1.0], IdentityId(4)).unwrap();
        assert_eq!(ins.evicted, vec![keys[0]]);
        assert_eq!(s.len(), 4);
        assert!(!s.contains(keys[0]));
    }

    #[test]
    fn unique_keys_and_ids_over_many_inserts() {
        let mut s = store(2000);
        let mut seen = HashSet::new();
        for i in 0..1000u64 {
            let id = s.allocate_identity();
            assert_eq!(id, IdentityId(i));
            let v = [1.0 + i as f64, (i % 7) as f64, 0.5];
            assert!(seen.insert(s.insert(&v, id).unwrap().key));
        }
        assert_eq!(seen.len(), 1000);
        assert_eq!(s.next_id(), IdentityId(1000));
    }

    #[test]
    fn decay_multiplies_and_resets_age() {
        let mut s = store(4);
        let k = s.insert(&[1.0, 0.0, 0.0], IdentityId(0)).unwrap().key;
        set_age(&mut s, k, 5);
        let removed = s.decay_and_touch(&[(k, 0.988434)]).unwrap();
        assert!(removed.is_empty());
        let m = s.meta(k).unwrap();
        assert_eq!(m.eligibility, 0.988434);
        assert_eq!(m.age, 0);
    }

    #[test]
    fn decay_below_threshold_removes() {
        let mut s = store(4);
        let k = s.insert(&[1.0, 0.0, 0.0], IdentityId(0)).unwrap().key;
        set_eligibility(&mut s, k, 0.505);
        assert_eq!(s.decay_and_touch(&[(k, 0.988434)]).unwrap(), vec![k]);
        assert!(s.is_empty());
    }

    #[test]
    fn sixty_touches_cross_the_threshold() {
        let mut s = store(4);
        let k = s.insert(&[1.0, 0.0, 0.0], IdentityId(0)).unwrap().key;
        for step in 1..=60 {
            let removed = s.decay_and_touch(&[(k, 0.988434)]).unwrap();
            if step < 60 {
                assert!(removed.is_empty(), "removed early at step {step}");
            } else {
                assert_eq!(removed, vec![k]);
            }
        }
    }

    #[test]
    fn decay_rejects_non_contracting_factors_atomically() {
        let mut s = store(4);
        let k = s.insert(&[1.0, 0.0, 0.0], IdentityId(0)).unwrap().key;
        for eta in [0.0, 1.0, 1.5, -0.1, f64::NAN] {
            let err = s.decay_and_touch(&[(k, 0.9), (k, eta)]).unwrap_err();
            assert!(matches!(err, Error::Contraction { .. }));
        }
        assert_eq!(s.meta(k).unwrap().eligibility, 1.0);
        assert!(matches!(
            s.decay_and_touch(&[(ItemKey(99), 0.9)]),
            Err(Error::UnknownItem(ItemKey(99)))
        ));
    }

    #[test]
    fn aging_skips_matched_items() {
        let mut s = store(4);
        let keys: Vec<ItemKey> = (0..3)
            .map(|i| s.insert(&[1.0, i as f64, 0.0], IdentityId(0)).unwrap().key)
            .collect();
        s.age_unmatched(&HashSet::from([keys[1]]));
        let ages: Vec<u64> = keys.iter().map(|k| s.meta(*k).unwrap().age).collect();
        assert_eq!(ages, vec![1, 0, 1]);

        s.age_unmatched(&HashSet::new());
        let ages: Vec<u64> = keys.iter().map(|k| s.meta(*k).unwrap().age).collect();
        assert_eq!(ages, vec![2, 1, 2]);

        s.age_unmatched(&keys.iter().copied().collect());
        let ages: Vec<u64> = keys.iter().map(|k| s.meta(*k).unwrap().age).collect();
        assert_eq!(ages, vec![2, 1, 2]);
    }

    #[test]
    fn eviction_tie_breaks_on_eligibility_then_key() {
        // Exhaustive over every assignment of the 3 items to (age, eligibility)
        // cells drawn from a small grid, compared with an explicit ranking.
        let ages = [0u64, 1, 2];
        let elig = [0.6, 0.8];
        let cells: Vec<(u64, f64)> = ages
            .iter()
            .flat_map(|&a| elig.iter().map(move |&e| (a, e)))
            .collect();
        for c0 in &cells {
            for c1 in &cells {
                for c2 in &cells {
                    let mut s = store(10);
                    let assigned = [c0, c1, c2];
                    let keys: Vec<ItemKey> = (0..3)
                        .map(|i| s.insert(&[1.0, i as f64, 1.0], IdentityId(0)).unwrap().key)
                        .collect();
                    for (k, (a, e)) in keys.iter().zip(assigned) {
                        set_age(&mut s, *k, *a);
                        set_eligibility(&mut s, *k, *e);
                    }
                    let mut expected: Vec<usize> = (0..3).collect();
                    expected.sort_by(|&x, &y| {
                        let (ax, ex) = assigned[x];
                        let (ay, ey) = assigned[y];
                        ay.cmp(ax).then(ex.partial_cmp(ey).unwrap()).then(x.cmp(&y))
                    });
                    s.config.capacity = 1;
                    let evicted = s.evict_overflow();
                    let want: Vec<ItemKey> = expected[..2].iter().map(|&i| keys[i]).collect();
                    assert_eq!(evicted, want, "cells {assigned:?}");
                }
            }
        }
    }

    #[test]
    fn eviction_prefers_lower_eligibility_on_age_tie() {
        let mut s = store(10);
        let a = s.insert(&[1.0, 0.0, 0.0], IdentityId(0)).unwrap().key;
        let b = s.insert(&[0.0, 1.0, 0.0], IdentityId(0)).unwrap().key;
        let c = s.insert(&[0.0, 0.0, 1.0], IdentityId(0)).unwrap().key;
        set_age(&mut s, a, 4);
        set_age(&mut s, b, 4);
        set_eligibility(&mut s, a, 0.9);
        set_eligibility(&mut s, b, 0.7);
        s.config.capacity = 1;
        assert_eq!(s.evict_overflow(), vec![b, a]);
        assert!(s.contains(c));
        assert!(s.evict_overflow().is_empty());
    }

    #[test]
    fn removal_keeps_storage_consistent() {
        let mut s = store(10);
        let keys: Vec<ItemKey> = (0..5)
            .map(|i| s.insert(&[1.0, i as f64, 0.0], IdentityId(0)).unwrap().key)
            .collect();
        let before: Vec<MemoryItem> = s.items();
        assert!(s.remove(keys[1]));
        assert!(!s.remove(keys[1]));
        for item in before.iter().filter(|i| i.key != keys[1]) {
            assert_eq!(s.get(item.key).as_ref(), Some(item));
        }
        assert_eq!(s.descriptors().len(), 4 * 3);
    }

    #[test]
    fn stats_summaries() {
        let s = store(4);
        assert_eq!(s.stats(), MemoryStats::default());

        let mut s = store(4);
        s.insert(&[1.0, 0.0, 0.0], IdentityId(0)).unwrap();
        s.insert(&[0.0, 1.0, 0.0], IdentityId(0)).unwrap();
        let st = s.stats();
        assert_eq!(st.size, 2);
        assert_eq!(st.per_identity, BTreeMap::from([(IdentityId(0), 2)]));
        assert_eq!(st.eligibility_histogram, BTreeMap::from([(9, 2)]));
        assert_eq!(st.age_histogram, BTreeMap::from([(0, 2)]));
    }

    #[test]
    fn stats_track_random_inserts_and_removals() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut s = store(1000);
        let mut live: HashSet<ItemKey> = HashSet::new();
        for _ in 0..100 {
            let id = IdentityId(rng.gen_range(0..=s.next_id().0));
            let v = [rng.gen_range(0.1..1.0), rng.gen_range(-1.0..1.0), 0.0];
            live.insert(s.insert(&v, id).unwrap().key);
            if rng.gen_bool(0.3) {
                let key = *live.iter().min().unwrap();
                let removed = s.decay_and_touch(&[(key, 0.1)]).unwrap();
                assert_eq!(removed, vec![key]);
                live.remove(&key);
            }
        }
        let st = s.stats();
        assert_eq!(st.size, live.len());
        assert_eq!(st.per_identity.values().sum::<usize>(), live.len());
    }
}
