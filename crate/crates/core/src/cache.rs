//! Dependency-tracked memoization of pipeline stages.
//!
//! Keys are `(stage, upstream fingerprints, params fingerprint)`. Identical
//! concurrent requests share one computation; failed computations leave no
//! entry behind, so the next caller retries.

use std::any::Any;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterLabels;
use crate::encoder::EmbeddingMatrix;
use crate::fingerprint::Fingerprint;
use crate::projection::ProjectionMatrix;
use crate::series::{DisplaySeries, TimeSeries, WindowMatrix};

pub const DEFAULT_BUDGET_BYTES: usize = 2 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Windows,
    Embed,
    Project,
    Cluster,
    Display,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Load,
        Stage::Windows,
        Stage::Embed,
        Stage::Project,
        Stage::Cluster,
        Stage::Display,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Windows => "windows",
            Stage::Embed => "embed",
            Stage::Project => "project",
            Stage::Cluster => "cluster",
            Stage::Display => "display",
        }
    }

    /// Position in `Stage::ALL` and in `CacheStats::compute_delta`.
    pub const fn index(self) -> usize {
        self as usize
    }

    /// Direct dependents.
    pub fn children(self) -> &'static [Stage] {
        match self {
            Stage::Load => &[Stage::Windows, Stage::Display],
            Stage::Windows => &[Stage::Embed],
            Stage::Embed => &[Stage::Project],
            Stage::Project => &[Stage::Cluster, Stage::Display],
            Stage::Cluster => &[Stage::Display],
            Stage::Display => &[],
        }
    }

    /// This stage and everything reachable from it.
    pub fn downstream(self) -> Vec<Stage> {
        let mut seen = vec![self];
        let mut i = 0;
        while i < seen.len() {
            for &c in seen[i].children() {
                if !seen.contains(&c) {
                    seen.push(c);
                }
            }
            i += 1;
        }
        seen.sort();
        seen
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown stage `{0}`")]
pub struct UnknownStage(pub String);

impl FromStr for Stage {
    type Err = UnknownStage;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| UnknownStage(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeKey {
    pub stage: Stage,
    pub inputs: Vec<Fingerprint>,
    pub params: Fingerprint,
}

impl NodeKey {
    pub fn new(stage: Stage, inputs: Vec<Fingerprint>, params: Fingerprint) -> Self {
        NodeKey { stage, inputs, params }
    }

    /// Fingerprint of the node's output.
    pub fn output_fingerprint(&self) -> Fingerprint {
        Fingerprint::combine(self.stage.as_str(), &self.inputs, &self.params)
    }
}

/// Approximate heap footprint used for the byte budget.
pub trait CacheWeight {
    fn weight_bytes(&self) -> usize;
}

impl CacheWeight for TimeSeries {
    fn weight_bytes(&self) -> usize {
        8 * self.len() * (1 + self.channel_count())
    }
}

impl CacheWeight for WindowMatrix {
    fn weight_bytes(&self) -> usize {
        8 * self.data.len()
    }
}

impl CacheWeight for EmbeddingMatrix {
    fn weight_bytes(&self) -> usize {
        8 * self.data.len()
    }
}

impl CacheWeight for ProjectionMatrix {
    fn weight_bytes(&self) -> usize {
        8 * self.coords.len()
    }
}

impl CacheWeight for ClusterLabels {
    fn weight_bytes(&self) -> usize {
        8 * self.labels.len()
    }
}

impl CacheWeight for DisplaySeries {
    fn weight_bytes(&self) -> usize {
        self.channels.iter().map(|c| 16 * c.values.len()).sum()
    }
}

impl<T: CacheWeight> CacheWeight for Vec<T> {
    fn weight_bytes(&self) -> usize {
        self.iter().map(CacheWeight::weight_bytes).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: Stage,
    pub compute_count: u64,
    pub hit_count: u64,
    pub last_compute_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheStats {
    pub stages: Vec<StageStats>,
    pub entries: usize,
    pub bytes: usize,
    pub budget_bytes: usize,
}

impl CacheStats {
    pub fn stage(&self, stage: Stage) -> &StageStats {
        &self.stages[stage.index()]
    }

    pub fn compute_count(&self, stage: Stage) -> u64 {
        self.stage(stage).compute_count
    }

    /// Per-stage compute-count increase since `earlier`.
    pub fn compute_delta(&self, earlier: &CacheStats) -> [u64; 6] {
        let mut out = [0; 6];
        for s in Stage::ALL {
            out[s.index()] = self.compute_count(s) - earlier.compute_count(s);
        }
        out
    }
}

#[derive(Default)]
struct Counters {
    computes: AtomicU64,
    hits: AtomicU64,
    last_nanos: AtomicU64,
}

struct Entry {
    value: Arc<dyn Any + Send + Sync>,
    bytes: usize,
    last_used: u64,
}

#[derive(Default)]
struct Inner {
    entries: HashMap<NodeKey, Entry>,
    in_flight: HashSet<NodeKey>,
    tick: u64,
    bytes: usize,
}

pub struct ReactiveCache {
    inner: Mutex<Inner>,
    done: Condvar,
    counters: [Counters; 6],
    budget: usize,
    enabled: bool,
}

impl Default for ReactiveCache {
    fn default() -> Self {
        ReactiveCache::new(DEFAULT_BUDGET_BYTES)
    }
}

impl fmt::Debug for ReactiveCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReactiveCache")
            .field("budget", &self.budget)
            .field("enabled", &self.enabled)
            .finish_non_exhaustive()
    }
}

/// Clears the in-flight mark even if the computation panics.
struct InFlightGuard<'a> {
    cache: &'a ReactiveCache,
    key: Option<NodeKey>,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        if let Some(key) = self.key.take() {
            self.cache.lock().in_flight.remove(&key);
            self.cache.done.notify_all();
        }
    }
}

impl ReactiveCache {
    pub fn new(budget_bytes: usize) -> Self {
        ReactiveCache {
            inner: Mutex::new(Inner::default()),
            done: Condvar::new(),
            counters: Default::default(),
            budget: budget_bytes,
            enabled: true,
        }
    }

    /// A cache that never stores anything. Every request computes.
    pub fn disabled() -> Self {
        ReactiveCache {
            enabled: false,
            ..ReactiveCache::new(0)
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.enabled
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn hit<T: Send + Sync + 'static>(&self, inner: &mut Inner, key: &NodeKey) -> Option<Arc<T>> {
        inner.tick += 1;
        let tick = inner.tick;
        let entry = inner.entries.get_mut(key)?;
        entry.last_used = tick;
        let value = Arc::clone(&entry.value)
            .downcast::<T>()
            .unwrap_or_else(|_| panic!("cache entry for {} holds a different type", key.stage));
        self.counters[key.stage.index()].hits.fetch_add(1, Ordering::Relaxed);
        Some(value)
    }

    /// Returns the cached value for `key` or runs `compute` exactly once.
    ///
    /// Callers asking for a key that is being computed block until it is
    /// done. If that computation fails, one of them retries.
    pub fn get_or_compute<T, E, F>(&self, key: NodeKey, compute: F) -> Result<Arc<T>, E>
    where
        T: CacheWeight + Send + Sync + 'static,
        F: FnOnce() -> Result<T, E>,
    {
        if !self.enabled {
            return self.run(&key, compute).map(Arc::new);
        }

        let mut inner = self.lock();
        loop {
            if let Some(v) = self.hit(&mut inner, &key) {
                return Ok(v);
            }
            if !inner.in_flight.contains(&key) {
                break;
            }
            inner = self.done.wait(inner).unwrap_or_else(|e| e.into_inner());
        }
        inner.in_flight.insert(key.clone());
        drop(inner);
        let mut guard = InFlightGuard {
            cache: self,
            key: Some(key.clone()),
        };

        let value = Arc::new(self.run(&key, compute)?);
        let bytes = value.weight_bytes();
        let mut inner = self.lock();
        inner.tick += 1;
        let tick = inner.tick;
        inner.bytes += bytes;
        let stored: Arc<dyn Any + Send + Sync> = value.clone();
        if let Some(old) = inner.entries.insert(
            key.clone(),
            Entry {
                value: stored,
                bytes,
                last_used: tick,
            },
        ) {
            inner.bytes -= old.bytes;
        }
        self.evict_over_budget(&mut inner, &key);
        inner.in_flight.remove(&key);
        guard.key = None;
        drop(inner);
        self.done.notify_all();
        Ok(value)
    }

    fn run<T, E, F: FnOnce() -> Result<T, E>>(&self, key: &NodeKey, compute: F) -> Result<T, E> {
        let start = Instant::now();
        let out = compute();
        let c = &self.counters[key.stage.index()];
        if out.is_ok() {
            c.computes.fetch_add(1, Ordering::Relaxed);
            c.last_nanos.store(start.elapsed().as_nanos() as u64, Ordering::Relaxed);
        }
        out
    }

    /// Least-recently-used entries go first; `keep` is never evicted.
    fn evict_over_budget(&self, inner: &mut Inner, keep: &NodeKey) {
        while inner.bytes > self.budget {
            let victim = inner
                .entries
                .iter()
                .filter(|(k, _)| *k != keep)
                .min_by_key(|(_, e)| e.last_used)
                .map(|(k, _)| k.clone());
            let Some(victim) = victim else { break };
            let e = inner.entries.remove(&victim).expect("present");
            inner.bytes -= e.bytes;
        }
    }

    pub fn contains(&self, key: &NodeKey) -> bool {
        self.lock().entries.contains_key(key)
    }

    /// Evicts every entry of `stage` and of all stages depending on it.
    pub fn invalidate_downstream(&self, stage: Stage) -> Vec<NodeKey> {
        let stages = stage.downstream();
        let mut inner = self.lock();
        let victims: Vec<NodeKey> = inner
            .entries
            .keys()
            .filter(|k| stages.contains(&k.stage))
            .cloned()
            .collect();
        for k in &victims {
            let e = inner.entries.remove(k).expect("present");
            inner.bytes -= e.bytes;
        }
        victims
    }

    pub fn clear(&self) {
        let mut inner = self.lock();
        inner.entries.clear();
        inner.bytes = 0;
    }

    pub fn stats(&self) -> CacheStats {
        let stages = Stage::ALL
            .iter()
            .map(|&s| {
                let c = &self.counters[s.index()];
                StageStats {
                    stage: s,
                    compute_count: c.computes.load(Ordering::Relaxed),
                    hit_count: c.hits.load(Ordering::Relaxed),
                    last_compute_seconds: c.last_nanos.load(Ordering::Relaxed) as f64 * 1e-9,
                }
            })
            .collect();
        let inner = self.lock();
        CacheStats {
            stages,
            entries: inner.entries.len(),
            bytes: inner.bytes,
            budget_bytes: self.budget,
        }
    }
}
