//! Reaction-choice policies: random, symmetric disconnection, ε-greedy
//! mixtures, and value-greedy choice over a value source.

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::universe::{Molecule, Reaction, Universe};
use crate::value::{EvalCache, ValueSource};

/// A policy picks one candidate index given the molecule, its residual
/// depth and a non-empty ordered candidate list (the engine handles the
/// empty case before consulting the policy).
pub trait ReactionPolicy: Sync {
    fn select(&self, m: &Molecule, depth_left: usize, candidates: &[Reaction], rng: &mut dyn RngCore) -> usize;
    fn name(&self) -> &'static str;
}

/// Uniform choice over the candidate list.
pub struct RandomPolicy;

impl ReactionPolicy for RandomPolicy {
    fn select(&self, _m: &Molecule, _d: usize, candidates: &[Reaction], rng: &mut dyn RngCore) -> usize {
        debug_assert!(!candidates.is_empty());
        rng.gen_range(0..candidates.len())
    }
    fn name(&self) -> &'static str {
        "random"
    }
}

/// Heuristic preference for splitting a product of size n into comparably
/// sized precursors: f(r) = n^γ − Σ n′^γ. Larger is better; with γ > 1 a
/// balanced split dominates a lopsided one of the same total size.
pub fn heuristic_score(r: &Reaction, gamma: f64) -> f64 {
    let n = r.product.size() as f64;
    let sum: f64 = r.reactants.iter().map(|q| (q.size() as f64).powf(gamma)).sum();
    n.powf(gamma) - sum
}

/// Deterministic argmax of [`heuristic_score`]; ties go to the earliest
/// candidate position.
pub struct SymmetricDisconnectionPolicy {
    pub gamma: f64,
}

impl SymmetricDisconnectionPolicy {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!("gamma must be finite and > 0, got {gamma}")));
        }
        Ok(SymmetricDisconnectionPolicy { gamma })
    }
}

impl ReactionPolicy for SymmetricDisconnectionPolicy {
    fn select(&self, _m: &Molecule, _d: usize, candidates: &[Reaction], _rng: &mut dyn RngCore) -> usize {
        debug_assert!(!candidates.is_empty());
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (i, r) in candidates.iter().enumerate() {
            let s = heuristic_score(r, self.gamma);
            if s > best_score {
                best_score = s;
                best = i;
            }
        }
        best
    }
    fn name(&self) -> &'static str {
        "symmetric-disconnection"
    }
}

/// Follows `base` with probability 1−ε, otherwise draws uniformly over the
/// full candidate list. ε=0 consumes no randomness for the explore coin and
/// is extensionally equal to `base`.
pub struct EpsilonGreedyPolicy<P: ReactionPolicy> {
    pub base: P,
    pub epsilon: f64,
}

impl<P: ReactionPolicy> EpsilonGreedyPolicy<P> {
    pub fn new(base: P, epsilon: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) || !epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must lie in [0,1], got {epsilon}")));
        }
        Ok(EpsilonGreedyPolicy { base, epsilon })
    }
}

impl<P: ReactionPolicy> ReactionPolicy for EpsilonGreedyPolicy<P> {
    fn select(&self, m: &Molecule, depth_left: usize, candidates: &[Reaction], rng: &mut dyn RngCore) -> usize {
        debug_assert!(!candidates.is_empty());
        if self.epsilon > 0.0 && rng.gen::<f64>() < self.epsilon {
            return rng.gen_range(0..candidates.len());
        }
        self.base.select(m, depth_left, candidates, rng)
    }
    fn name(&self) -> &'static str {
        "epsilon-greedy"
    }
}

/// Exploration schedule: ε = max(0, start − step·⌊iteration/period⌋).
/// Defaults 0.2 / 0.05 / 200 anneal to exactly 0 by iteration 800. The
/// result is snapped to the nearest 1e-9 so block values read as the
/// schedule's decimals (0.15, not 0.15000000000000002) in logs and CSVs.
pub fn anneal_epsilon(iteration: usize, start: f64, step: f64, period: usize) -> f64 {
    let k = (iteration / period.max(1)) as f64;
    let eps = (start - step * k).max(0.0);
    (eps * 1e9).round() / 1e9
}

/// Greedy argmin of c_rxn(r) + Σ v(m′, δ−1) over the candidates, with the
/// reactant value ladder: buyable → price; δ−1 = 0 → P1; no applicable
/// reactions → P2; otherwise the supplied value source. Terminal values
/// take precedence over the approximator, mirroring how the engine closes
/// leaves. Ties go to the earliest candidate.
pub struct ValueGreedyPolicy<'a, V: ValueSource> {
    universe: &'a Universe,
    cfg: GameConfig,
    values: &'a V,
    cache: &'a EvalCache,
}

impl<'a, V: ValueSource> ValueGreedyPolicy<'a, V> {
    pub fn new(universe: &'a Universe, cfg: GameConfig, values: &'a V, cache: &'a EvalCache) -> Self {
        ValueGreedyPolicy { universe, cfg, values, cache }
    }

    /// Value of one reactant at residual depth `d`, terminals first.
    fn reactant_value(&self, q: &Molecule, d: usize, rng: &mut dyn RngCore) -> f64 {
        if let Some(price) = self.universe.substrate_price(q) {
            return price;
        }
        if d == 0 {
            return self.cfg.p1;
        }
        if self.cache.is_dead_end(self.universe, q) {
            return self.cfg.p2;
        }
        self.values.estimate(q, d, rng)
    }

    /// Score every candidate; exposed for diagnostics and tests.
    pub fn scores(
        &self,
        candidates: &[Reaction],
        depth_left: usize,
        rng: &mut dyn RngCore,
    ) -> Vec<f64> {
        candidates
            .iter()
            .map(|r| {
                r.cost
                    + r.reactants
                        .iter()
                        .map(|q| self.reactant_value(q, depth_left - 1, rng))
                        .sum::<f64>()
            })
            .collect()
    }
}

impl<'a, V: ValueSource> ReactionPolicy for ValueGreedyPolicy<'a, V> {
    fn select(&self, _m: &Molecule, depth_left: usize, candidates: &[Reaction], rng: &mut dyn RngCore) -> usize {
        debug_assert!(!candidates.is_empty() && depth_left >= 1);
        let mut best = 0usize;
        let mut best_score = f64::INFINITY;
        for (i, r) in candidates.iter().enumerate() {
            let mut score = r.cost;
            for q in &r.reactants {
                score += self.reactant_value(q, depth_left - 1, rng);
            }
            if score < best_score {
                best_score = score;
                best = i;
            }
        }
        best
    }
    fn name(&self) -> &'static str {
        "value-greedy"
    }
}

/// Declarative policy selection as used by configuration and the CLI.
#[derive(Clone, Debug, PartialEq)]
pub enum PolicyKind {
    Random,
    SymmetricDisconnection { gamma: f64 },
    /// ε-greedy over symmetric disconnection.
    SdEpsilon { gamma: f64, epsilon: f64 },
    /// Greedy over the learned value function (store + network).
    ValueGreedy,
}

impl PolicyKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            PolicyKind::Random | PolicyKind::ValueGreedy => Ok(()),
            PolicyKind::SymmetricDisconnection { gamma } => {
                SymmetricDisconnectionPolicy::new(*gamma).map(|_| ())
            }
            PolicyKind::SdEpsilon { gamma, epsilon } => {
                let base = SymmetricDisconnectionPolicy::new(*gamma)?;
                EpsilonGreedyPolicy::new(base, *epsilon).map(|_| ())
            }
        }
    }

    pub fn parse(name: &str, gamma: f64, epsilon: f64) -> Result<Self> {
        let kind = match name {
            "random" => PolicyKind::Random,
            "sd" => PolicyKind::SymmetricDisconnection { gamma },
            "sd-eps" => PolicyKind::SdEpsilon { gamma, epsilon },
            "value" => PolicyKind::ValueGreedy,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown policy `{other}` (expected random|sd|sd-eps|value)"
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}
