//! Query-state caching.
//!
//! Two similarity-keyed caches sit in front of the expensive backends: one
//! maps query embeddings to retrieved sample sets, the other to trained
//! adapters. A lookup reuses the value of the most similar cached key when
//! that similarity strictly exceeds `tau_e`; otherwise the backend runs and
//! the result is inserted, evicting the least-frequently-used entry (oldest
//! touch on ties) when the cache is at budget.
//!
//! Each cache keeps its own key set, so a hit always lands on a key whose
//! value is still present.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::{inner_product, UnitVector};
use crate::error::{Error, Result};
use crate::kb::Retriever;
use crate::model::{AdapterState, ModelHandle, Trainer, TrainHyper};
use crate::pipeline::RoutingOutcome;
use crate::scalar::{lit, Scalar};
use crate::types::RetrievedSet;
use crate::Embedding;

/// Keys this close to 1.0 are treated as the same query.
const DUPLICATE_KEY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityMetric {
    #[default]
    InnerProduct,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvictionPolicy {
    #[default]
    Lfu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QscConfig {
    /// Reuse threshold; a hit needs similarity strictly above it.
    pub tau_e: f64,
    /// Maximum entries per cache.
    pub budget: usize,
    pub metric: SimilarityMetric,
    pub eviction: EvictionPolicy,
}

impl Default for QscConfig {
    fn default() -> Self {
        Self {
            tau_e: 0.5,
            budget: 8,
            metric: SimilarityMetric::InnerProduct,
            eviction: EvictionPolicy::Lfu,
        }
    }
}

impl QscConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::Config("qsc budget must be at least 1".into()));
        }
        if !self.tau_e.is_finite() {
            return Err(Error::Config("qsc tau_e must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize, V: Serialize",
    deserialize = "T: Scalar + Deserialize<'de>, V: Deserialize<'de>"
))]
pub struct CacheEntry<T, V> {
    pub key: UnitVector<T>,
    pub value: V,
    pub freq: u64,
    pub last_touch: u64,
}

/// Result of one cache lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Lookup<T, V> {
    pub value: V,
    pub hit: bool,
    /// Similarity to the nearest pre-existing key, if the cache was non-empty.
    pub nearest_similarity: Option<T>,
    /// Entries removed to make room for the insertion.
    pub evicted: Vec<CacheEntry<T, V>>,
}

/// A budgeted similarity cache with LFU eviction.
#[derive(Debug, Clone, PartialEq)]
pub struct StateCache<T, V> {
    entries: Vec<CacheEntry<T, V>>,
    budget: usize,
    tau_e: T,
}

impl<T: Scalar, V: Clone> StateCache<T, V> {
    pub fn new(budget: usize, tau_e: T) -> Self {
        Self {
            entries: Vec::new(),
            budget,
            tau_e,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn entries(&self) -> &[CacheEntry<T, V>] {
        &self.entries
    }

    /// Entry with the highest similarity to `e`; older entry on ties.
    pub fn nearest(&self, e: &UnitVector<T>) -> Result<Option<(&CacheEntry<T, V>, T)>> {
        Ok(self.nearest_index(e)?.map(|(i, s)| (&self.entries[i], s)))
    }

    fn nearest_index(&self, e: &UnitVector<T>) -> Result<Option<(usize, T)>> {
        let mut best: Option<(usize, T)> = None;
        for (i, entry) in self.entries.iter().enumerate() {
            let sim = inner_product(&entry.key, e)?;
            best = match best {
                None => Some((i, sim)),
                Some((j, s)) => {
                    let older = entry.last_touch < self.entries[j].last_touch;
                    if sim > s || (sim == s && older) {
                        Some((i, sim))
                    } else {
                        Some((j, s))
                    }
                }
            };
        }
        Ok(best)
    }

    /// Removes one least-frequently-used entry (oldest touch on ties).
    pub fn evict(&mut self) -> Vec<CacheEntry<T, V>> {
        let victim = self
            .entries
            .iter()
            .enumerate()
            .min_by_key(|(_, e)| (e.freq, e.last_touch))
            .map(|(i, _)| i);
        victim.map(|i| self.entries.remove(i)).into_iter().collect()
    }

    /// Returns the cached value for a similar key, or computes, inserts and
    /// returns a fresh one. Nothing is inserted when `compute` fails.
    pub fn lookup_or_insert_with<F>(&mut self, e: &UnitVector<T>, clock: &mut u64, compute: F) -> Result<Lookup<T, V>>
    where
        F: FnOnce() -> Result<V>,
    {
        let nearest = self.nearest_index(e)?;
        *clock += 1;
        let now = *clock;
        if let Some((i, sim)) = nearest {
            if sim > self.tau_e {
                let entry = &mut self.entries[i];
                entry.freq += 1;
                entry.last_touch = now;
                return Ok(Lookup {
                    value: entry.value.clone(),
                    hit: true,
                    nearest_similarity: Some(sim),
                    evicted: Vec::new(),
                });
            }
        }
        let value = compute()?;
        let fresh = CacheEntry {
            key: e.clone(),
            value: value.clone(),
            freq: 1,
            last_touch: now,
        };
        let mut evicted = Vec::new();
        match nearest {
            // Only reachable when tau_e ≥ 1: keep keys pairwise distinct.
            Some((i, sim)) if sim >= T::one() - lit(DUPLICATE_KEY_EPS) => self.entries[i] = fresh,
            _ => {
                while self.entries.len() >= self.budget {
                    evicted.extend(self.evict());
                }
                self.entries.push(fresh);
            }
        }
        Ok(Lookup {
            value,
            hit: false,
            nearest_similarity: nearest.map(|(_, s)| s),
            evicted,
        })
    }
}

/// Both caches plus the shared touch clock.
#[derive(Debug, Clone, PartialEq)]
pub struct QscState {
    config: QscConfig,
    rag: StateCache<f64, RetrievedSet>,
    ttt: StateCache<f64, AdapterState>,
    tick: u64,
}

impl QscState {
    pub fn new(config: QscConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            rag: StateCache::new(config.budget, config.tau_e),
            ttt: StateCache::new(config.budget, config.tau_e),
            config,
            tick: 0,
        })
    }

    pub fn config(&self) -> &QscConfig {
        &self.config
    }

    pub fn rag_cache(&self) -> &StateCache<f64, RetrievedSet> {
        &self.rag
    }

    pub fn ttt_cache(&self) -> &StateCache<f64, AdapterState> {
        &self.ttt
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Retrieved samples for `e`, from cache when a similar query was seen.
    pub fn lookup_or_retrieve(
        &mut self,
        query_id: &str,
        e: &Embedding,
        k: usize,
        retriever: &dyn Retriever,
    ) -> Result<Lookup<f64, RetrievedSet>> {
        if k == 0 {
            return Err(Error::Config("retrieval size k must be at least 1".into()));
        }
        self.rag
            .lookup_or_insert_with(e, &mut self.tick, || retriever.retrieve(query_id, e, k))
    }

    /// Adapter for `e`, from cache when a similar query was seen; otherwise
    /// trains `base` on `samples`.
    pub fn lookup_or_train(
        &mut self,
        e: &Embedding,
        samples: &RetrievedSet,
        base: &ModelHandle,
        hyper: &TrainHyper,
        trainer: &dyn Trainer,
    ) -> Result<Lookup<f64, AdapterState>> {
        if samples.is_empty() {
            return Err(Error::EmptySampleSet);
        }
        self.ttt
            .lookup_or_insert_with(e, &mut self.tick, || trainer.train(base, samples, hyper))
    }

    pub fn to_dump(&self) -> QscDump {
        QscDump {
            tick: self.tick,
            rag: self.rag.entries.clone(),
            ttt: self.ttt.entries.clone(),
        }
    }

    pub fn from_dump(config: QscConfig, dump: QscDump) -> Result<Self> {
        let mut state = Self::new(config)?;
        let budget = state.config.budget;
        if dump.rag.len() > budget || dump.ttt.len() > budget {
            return Err(Error::Config(format!("cache dump exceeds budget {budget}")));
        }
        let dims: Vec<usize> = dump
            .rag
            .iter()
            .map(|e| e.key.dim())
            .chain(dump.ttt.iter().map(|e| e.key.dim()))
            .collect();
        if let Some(&d) = dims.first() {
            if let Some(&bad) = dims.iter().find(|&&x| x != d) {
                return Err(Error::DimMismatch { expected: d, got: bad });
            }
        }
        state.rag.entries = dump.rag;
        state.ttt.entries = dump.ttt;
        state.tick = dump.tick;
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(&self.to_dump())?)?;
        Ok(())
    }

    pub fn load(config: QscConfig, path: &Path) -> Result<Self> {
        let dump: QscDump = serde_json::from_slice(&std::fs::read(path)?)?;
        Self::from_dump(config, dump)
    }
}

/// Serialized form of [`QscState`] (`qsc-state.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QscDump {
    pub tick: u64,
    pub rag: Vec<CacheEntry<f64, RetrievedSet>>,
    pub ttt: Vec<CacheEntry<f64, AdapterState>>,
}

/// Share of stage-entering queries served from cache. `None` when no query
/// entered the stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CacheUtilization {
    pub rag: Option<f64>,
    pub ttt: Option<f64>,
}

pub fn cache_utilization<'a, I>(outcomes: I) -> Result<CacheUtilization>
where
    I: IntoIterator<Item = &'a RoutingOutcome>,
{
    let mut n = 0usize;
    let (mut rag_in, mut rag_hit, mut ttt_in, mut ttt_hit) = (0usize, 0usize, 0usize, 0usize);
    for o in outcomes {
        n += 1;
        if let Some(hit) = o.cache_flags.rag_hit {
            rag_in += 1;
            rag_hit += usize::from(hit);
        }
        if let Some(hit) = o.cache_flags.ttt_hit {
            ttt_in += 1;
            ttt_hit += usize::from(hit);
        }
    }
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let frac = |h: usize, t: usize| (t > 0).then(|| h as f64 / t as f64);
    Ok(CacheUtilization {
        rag: frac(rag_hit, rag_in),
        ttt: frac(ttt_hit, ttt_in),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::RetrievedSample;
    use std::cell::Cell;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn unit(v: &[f64]) -> Embedding {
        Embedding::normalize(v).unwrap()
    }

    fn cache(budget: usize) -> StateCache<f64, &'static str> {
        StateCache::new(budget, 0.5)
    }

    #[test]
    fn nearest_examples() {
        let mut c = cache(8);
        let mut clock = 0;
        assert!(c.nearest(&unit(&[1.0, 0.0])).unwrap().is_none());
        c.lookup_or_insert_with(&unit(&[1.0, 0.0]), &mut clock, || Ok("a")).unwrap();
        c.lookup_or_insert_with(&unit(&[0.0, 1.0]), &mut clock, || Ok("b")).unwrap();
        let (e, s) = c.nearest(&unit(&[1.0, 0.0])).unwrap().unwrap();
        assert_eq!((e.value, s), ("a", 1.0));

        // 0.96 apart, so both are stored only with a stricter threshold
        let mut c = StateCache::new(8, 0.99);
        c.lookup_or_insert_with(&unit(&[0.6, 0.8]), &mut clock, || Ok("a")).unwrap();
        c.lookup_or_insert_with(&unit(&[0.8, 0.6]), &mut clock, || Ok("b")).unwrap();
        let (e, s) = c.nearest(&unit(&[1.0, 0.0])).unwrap().unwrap();
        assert_eq!(e.value, "b");
        assert!((s - 0.8).abs() < 1e-15);
    }

    #[test]
    fn nearest_tie_prefers_older() {
        let mut c = StateCache::new(8, 0.99);
        let mut clock = 0;
        c.lookup_or_insert_with(&unit(&[1.0, 1.0]), &mut clock, || Ok("old")).unwrap();
        c.lookup_or_insert_with(&unit(&[1.0, -1.0]), &mut clock, || Ok("new")).unwrap();
        let (e, _) = c.nearest(&unit(&[1.0, 0.0])).unwrap().unwrap();
        assert_eq!(e.value, "old");
    }

    #[test]
    fn nearest_dim_mismatch() {
        let mut c = cache(2);
        let mut clock = 0;
        c.lookup_or_insert_with(&unit(&[1.0, 0.0]), &mut clock, || Ok("a")).unwrap();
        assert!(matches!(c.nearest(&unit(&[1.0, 0.0, 0.0])), Err(Error::DimMismatch { .. })));
    }

    #[test]
    fn hit_miss_and_threshold_is_strict() {
        let mut c = cache(8);
        let mut clock = 0;
        let calls = Cell::new(0);
        let compute = || {
            calls.set(calls.get() + 1);
            Ok("v")
        };
        let first = c.lookup_or_insert_with(&unit(&[1.0, 0.0]), &mut clock, compute).unwrap();
        assert!(!first.hit);
        let second = c.lookup_or_insert_with(&unit(&[1.0, 0.0]), &mut clock, compute).unwrap();
        assert!(second.hit);
        assert_eq!(calls.get(), 1);
        assert_eq!(c.entries()[0].freq, 2);

        // similarity 0.4 < 0.5 → miss
        let q = unit(&[0.4, (1.0f64 - 0.16).sqrt()]);
        assert!(!c.lookup_or_insert_with(&q, &mut clock, compute).unwrap().hit);

        // similarity exactly 0.5 → miss
        let mut c = cache(8);
        c.lookup_or_insert_with(&unit(&[1.0, 0.0]), &mut clock, compute).unwrap();
        let e = UnitVector::from_unit(vec![0.5, 0.75f64.sqrt()]).unwrap();
        assert_eq!(inner_product(&c.entries()[0].key, &e).unwrap(), 0.5);
        assert!(!c.lookup_or_insert_with(&e, &mut clock, compute).unwrap().hit);
    }

    #[test]
    fn failed_compute_inserts_nothing() {
        let mut c = cache(8);
        let mut clock = 0;
        let r = c.lookup_or_insert_with(&unit(&[1.0, 0.0]), &mut clock, || {
            Err(Error::BackendUnavailable("down".into()))
        });
        assert!(r.is_err());
        assert!(c.is_empty());
    }

    #[test]
    fn lfu_eviction_examples() {
        let mut clock = 0;
        // freq {A:1, B:3} → A removed
        let mut c = StateCache::new(2, 0.5);
        c.lookup_or_insert_with(&unit(&[1.0, 0.0, 0.0]), &mut clock, || Ok("A")).unwrap();
        for _ in 0..3 {
            c.lookup_or_insert_with(&unit(&[0.0, 1.0, 0.0]), &mut clock, || Ok("B")).unwrap();
        }
        assert_eq!(c.entries()[1].freq, 3);
        let l = c.lookup_or_insert_with(&unit(&[0.0, 0.0, 1.0]), &mut clock, || Ok("C")).unwrap();
        assert_eq!(l.evicted.len(), 1);
        assert_eq!(l.evicted[0].value, "A");
        assert_eq!(c.len(), 2);

        // freq {A:2, B:2}, A older → A removed
        let mut c = StateCache::new(2, 0.5);
        c.lookup_or_insert_with(&unit(&[1.0, 0.0, 0.0]), &mut clock, || Ok("A")).unwrap();
        c.lookup_or_insert_with(&unit(&[1.0, 0.0, 0.0]), &mut clock, || Ok("A")).unwrap();
        c.lookup_or_insert_with(&unit(&[0.0, 1.0, 0.0]), &mut clock, || Ok("B")).unwrap();
        c.lookup_or_insert_with(&unit(&[0.0, 1.0, 0.0]), &mut clock, || Ok("B")).unwrap();
        let removed = c.evict();
        assert_eq!(removed[0].value, "A");
        assert_eq!(c.len(), 1);
        c.lookup_or_insert_with(&unit(&[0.0, 0.0, 1.0]), &mut clock, || Ok("C")).unwrap();
        assert_eq!(c.len(), 2);
    }

    #[test]
    fn duplicate_keys_replaced_when_threshold_unreachable() {
        let mut c = StateCache::new(4, 1.5);
        let mut clock = 0;
        c.lookup_or_insert_with(&unit(&[1.0, 0.0]), &mut clock, || Ok("a")).unwrap();
        let l = c.lookup_or_insert_with(&unit(&[1.0, 0.0]), &mut clock, || Ok("b")).unwrap();
        assert!(!l.hit);
        assert_eq!(c.len(), 1);
        assert_eq!(c.entries()[0].value, "b");
    }

    fn retrieved(ids: &[&str]) -> RetrievedSet {
        RetrievedSet {
            samples: ids
                .iter()
                .map(|id| RetrievedSample {
                    sample_id: id.to_string(),
                    prompt: "p".into(),
                    completion: "c".into(),
                    domain: "d".into(),
                    similarity: 0.9,
                })
                .collect(),
            k_requested: ids.len(),
        }
    }

    struct CountingRetriever(AtomicUsize);

    impl Retriever for CountingRetriever {
        fn retrieve(&self, _q: &str, _e: &Embedding, k: usize) -> Result<RetrievedSet> {
            self.0.fetch_add(1, Ordering::SeqCst);
            let mut s = retrieved(&["x", "y", "z", "w"]);
            s.samples.truncate(k);
            s.k_requested = k;
            Ok(s)
        }
    }

    #[test]
    fn qsc_state_planes() {
        let mut st = QscState::new(QscConfig::default()).unwrap();
        let r = CountingRetriever(AtomicUsize::new(0));
        let e = unit(&[1.0, 2.0, 3.0]);
        let a = st.lookup_or_retrieve("q1", &e, 2, &r).unwrap();
        let b = st.lookup_or_retrieve("q2", &e, 2, &r).unwrap();
        assert!(!a.hit && b.hit);
        assert_eq!(a.value, b.value);
        assert_eq!(r.0.load(Ordering::SeqCst), 1);

        let model = crate::model::SimulatedModel::new(
            crate::model::HashEmbedder::default(),
            crate::model::RewardScript::new(0.0).unwrap(),
        );
        let base = ModelHandle::base("m0");
        let h = TrainHyper::default();
        let t1 = st.lookup_or_train(&e, &a.value, &base, &h, &model).unwrap();
        let t2 = st.lookup_or_train(&e, &a.value, &base, &h, &model).unwrap();
        assert!(!t1.hit && t2.hit);
        assert_eq!(t1.value.digest, t2.value.digest);
        assert!(matches!(
            st.lookup_or_train(&e, &retrieved(&[]), &base, &h, &model),
            Err(Error::EmptySampleSet)
        ));
        assert_eq!(st.tick(), 4);
    }

    #[test]
    fn dump_round_trip() {
        let mut st = QscState::new(QscConfig::default()).unwrap();
        let r = CountingRetriever(AtomicUsize::new(0));
        st.lookup_or_retrieve("q1", &unit(&[1.0, 0.0]), 3, &r).unwrap();
        st.lookup_or_retrieve("q2", &unit(&[0.0, 1.0]), 3, &r).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("qsc-state.json");
        st.save(&path).unwrap();
        let back = QscState::load(QscConfig::default(), &path).unwrap();
        assert_eq!(back, st);
        let small = QscConfig { budget: 1, ..QscConfig::default() };
        assert!(QscState::load(small, &path).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(QscState::new(QscConfig { budget: 0, ..QscConfig::default() }).is_err());
        assert!(QscState::new(QscConfig { tau_e: f64::NAN, ..QscConfig::default() }).is_err());
        let json = serde_json::to_string(&QscConfig::default()).unwrap();
        assert_eq!(json, r#"{"tau_e":0.5,"budget":8,"metric":"inner_product","eviction":"lfu"}"#);
    }
}
