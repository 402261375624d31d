//! Exact per-(molecule, δ) cost averages, the estimate precedence chain,
//! and shared evaluation caches. The neural approximator lives in
//! [`network`].

pub mod network;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use dashmap::DashMap;
use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::game::{EpisodeRecord, GameConfig};
use crate::universe::{Molecule, Universe};

pub use network::{FitReport, NetworkConfig, TrainSample, ValueNetwork};

/// Running cost averages keyed by (canonical string, residual depth).
#[derive(Clone, Debug, Default)]
pub struct ValueStore {
    table: HashMap<(Molecule, usize), (u64, f64)>,
}

impl ValueStore {
    pub fn new() -> Self {
        ValueStore::default()
    }

    /// Records one realized visit cost, updating the running mean.
    pub fn record(&mut self, m: &Molecule, depth_left: usize, cost: f64) {
        let entry = self.table.entry((m.clone(), depth_left)).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += (cost - entry.1) / entry.0 as f64;
    }

    /// Records every visit cost of a finished episode.
    pub fn record_episode(&mut self, episode: &EpisodeRecord) {
        for v in &episode.visit_costs {
            self.record(&v.molecule, v.depth_left, v.cost);
        }
    }

    pub fn mean(&self, m: &Molecule, depth_left: usize) -> Option<f64> {
        self.table.get(&(m.clone(), depth_left)).map(|(_, mean)| *mean)
    }

    pub fn count(&self, m: &Molecule, depth_left: usize) -> u64 {
        self.table.get(&(m.clone(), depth_left)).map(|(c, _)| *c).unwrap_or(0)
    }

    /// Number of (molecule, δ) keys present.
    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Drops every key; the trainer calls this on each ε transition.
    pub fn purge(&mut self) {
        self.table.clear();
    }

    /// Entries sorted by (canonical string, δ) for deterministic output.
    pub fn sorted_entries(&self) -> Vec<(Molecule, usize, u64, f64)> {
        let mut rows: Vec<_> = self
            .table
            .iter()
            .map(|((m, d), (c, mean))| (m.clone(), *d, *c, *mean))
            .collect();
        rows.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        rows
    }

    /// Line-oriented text form: header then `canon δ count mean` rows.
    pub fn serialize(&self) -> String {
        let rows = self.sorted_entries();
        let mut out = String::new();
        let _ = writeln!(out, "retroplan-store v1 entries={}", rows.len());
        for (m, d, c, mean) in rows {
            let _ = writeln!(out, "{m} {d} {c} {mean}");
        }
        out
    }

    pub fn parse(text: &str) -> Result<ValueStore> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty store file".into()))?;
        if !header.starts_with("retroplan-store v1 ") {
            return Err(Error::Format(format!("unrecognized store header `{header}`")));
        }
        let mut store = ValueStore::new();
        for (no, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 {
                return Err(Error::Format(format!("store line {} malformed: `{line}`", no + 2)));
            }
            let d: usize = parts[1].parse().map_err(|_| Error::Format(format!("bad δ on line {}", no + 2)))?;
            let c: u64 = parts[2].parse().map_err(|_| Error::Format(format!("bad count on line {}", no + 2)))?;
            let mean: f64 = parts[3].parse().map_err(|_| Error::Format(format!("bad mean on line {}", no + 2)))?;
            if c == 0 || !mean.is_finite() {
                return Err(Error::Format(format!("invalid store entry on line {}", no + 2)));
            }
            store.table.insert((Molecule::new(parts[0]), d), (c, mean));
        }
        Ok(store)
    }
}

/// Supplies non-terminal value estimates for reactants during play.
/// Terminal conditions (buyable, δ=0, dead end) are resolved by the caller
/// before this source is consulted.
pub trait ValueSource: Sync {
    fn estimate(&self, m: &Molecule, depth_left: usize, rng: &mut dyn RngCore) -> f64;
}

/// Fixed lookup table with a default for absent keys; used in tests and
/// diagnostics where hand-chosen values are needed.
#[derive(Clone, Debug)]
pub struct TableValue {
    map: HashMap<(String, usize), f64>,
    pub default: f64,
}

impl Default for TableValue {
    fn default() -> Self {
        TableValue { map: HashMap::new(), default: 50.0 }
    }
}

impl TableValue {
    pub fn set(&mut self, canon: &str, depth_left: usize, value: f64) {
        self.map.insert((canon.to_string(), depth_left), value);
    }
}

impl ValueSource for TableValue {
    fn estimate(&self, m: &Molecule, depth_left: usize, _rng: &mut dyn RngCore) -> f64 {
        *self.map.get(&(m.canon().to_string(), depth_left)).unwrap_or(&self.default)
    }
}

/// Fresh-draw bounds for molecules nobody has seen yet.
pub const BOOTSTRAP_LOW: f64 = 1.0;
pub const BOOTSTRAP_HIGH: f64 = 100.0;

/// The learned estimate chain: exact store mean where available, then the
/// network (when one exists), then a fresh seeded uniform draw from
/// [1, 100]. Draws are never cached — the same unseen molecule gets a new
/// guess on every query.
pub struct LearnedValue<'a> {
    pub store: &'a ValueStore,
    pub net: Option<&'a ValueNetwork>,
    pub cache: &'a EvalCache,
}

impl<'a> LearnedValue<'a> {
    pub fn new(store: &'a ValueStore, net: Option<&'a ValueNetwork>, cache: &'a EvalCache) -> Self {
        LearnedValue { store, net, cache }
    }
}

impl<'a> ValueSource for LearnedValue<'a> {
    fn estimate(&self, m: &Molecule, depth_left: usize, rng: &mut dyn RngCore) -> f64 {
        if let Some(mean) = self.store.mean(m, depth_left) {
            return mean;
        }
        if let Some(net) = self.net {
            return self.cache.net_value(net, m, depth_left);
        }
        BOOTSTRAP_LOW + (BOOTSTRAP_HIGH - BOOTSTRAP_LOW) * rng.gen::<f64>()
    }
}

/// Full estimate precedence for a molecule value at residual depth δ:
/// (1) buyable → substrate price; (2) δ = 0 → P1; (3) exact store mean;
/// (4) network forward; (5) fresh uniform draw from [1, 100]. Exactly one
/// branch fires for any input.
pub fn estimate(
    u: &Universe,
    cfg: &GameConfig,
    store: &ValueStore,
    net: Option<&ValueNetwork>,
    cache: &EvalCache,
    m: &Molecule,
    depth_left: usize,
    rng: &mut dyn RngCore,
) -> f64 {
    if let Some(price) = u.substrate_price(m) {
        return price;
    }
    if depth_left == 0 {
        return cfg.p1;
    }
    LearnedValue::new(store, net, cache).estimate(m, depth_left, rng)
}

/// Shared memoization for policy evaluation: dead-end checks, network
/// outputs (invalidated on every network update) and fingerprint bit sets.
/// Concurrent readers during the game phase are safe.
#[derive(Debug, Default)]
pub struct EvalCache {
    dead_end: DashMap<Molecule, bool>,
    net_values: DashMap<(Molecule, usize), f64>,
    fingerprints: DashMap<(Molecule, usize, usize), Arc<Vec<u32>>>,
}

impl EvalCache {
    pub fn new() -> Self {
        EvalCache::default()
    }

    /// Whether `m` has no applicable reactions in `u` (memoized).
    pub fn is_dead_end(&self, u: &Universe, m: &Molecule) -> bool {
        if let Some(v) = self.dead_end.get(m) {
            return *v;
        }
        let dead = !u.has_any_reaction(m);
        self.dead_end.insert(m.clone(), dead);
        dead
    }

    /// Network output for (m, δ), memoized until [`Self::clear_net_values`].
    pub fn net_value(&self, net: &ValueNetwork, m: &Molecule, depth_left: usize) -> f64 {
        let key = (m.clone(), depth_left);
        if let Some(v) = self.net_values.get(&key) {
            return *v;
        }
        let bits = self.fingerprint_bits(m, net.fingerprint_len(), net.fingerprint_radius());
        let v = net.predict_bits(&bits, depth_left);
        self.net_values.insert(key, v);
        v
    }

    /// Set-bit indices of the molecule's fingerprint, memoized per
    /// (molecule, length, radius).
    pub fn fingerprint_bits(&self, m: &Molecule, len: usize, radius: usize) -> Arc<Vec<u32>> {
        let key = (m.clone(), len, radius);
        if let Some(v) = self.fingerprints.get(&key) {
            return v.clone();
        }
        let fp = crate::universe::Fingerprint::compute(m, len, radius)
            .expect("fingerprint parameters are validated at configuration time");
        let bits = Arc::new(fp.set_indices());
        self.fingerprints.insert(key, bits.clone());
        bits
    }

    /// Invalidate memoized network outputs (call after every net update).
    pub fn clear_net_values(&self) {
        self.net_values.clear();
    }

    pub fn net_values_len(&self) -> usize {
        self.net_values.len()
    }
}
