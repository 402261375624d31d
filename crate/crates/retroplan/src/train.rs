//! Policy-iteration trainer and evaluation harness.
//!
//! Each iteration plays every training target once under an ε-greedy
//! value-guided policy, folds the realized visit costs into the running
//! value store and the cumulative reaction network, and periodically
//! refits the value network on recently touched entries. After the last
//! iteration the cumulative network is solved exactly by dynamic
//! programming and the network is retrained on the exact values.
//!
//! Within an iteration the store and network are frozen and each target
//! slot draws from its own seeded stream, so results are identical for
//! any worker count.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::dp::{min_cost_dp, DpResult, ReactionNetwork};
use crate::error::{Error, Result};
use crate::game::{self, play_game, EpisodeRecord, GameConfig, Outcome};
use crate::policy::{anneal_epsilon, EpsilonGreedyPolicy, ReactionPolicy, ValueGreedyPolicy};
use crate::rng;
use crate::universe::{Molecule, Universe};
use crate::value::{EvalCache, FitReport, LearnedValue, NetworkConfig, TrainSample, ValueNetwork, ValueStore};

/// Knobs of the policy-iteration loop.
#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub iterations: usize,
    pub epsilon_start: f64,
    pub epsilon_step: f64,
    pub epsilon_period: usize,
    /// Iterations played before the first network fit.
    pub warmup_iterations: usize,
    /// Refit cadence after warmup, in iterations.
    pub update_period: usize,
    /// Cap on store entries fed into one periodic refit.
    pub new_entries_per_update: usize,
    /// Cap on exact DP entries fed into the final retrain.
    pub final_train_cap: usize,
    pub epochs_per_update: usize,
    pub final_epochs: usize,
    /// Write a weights snapshot every this many iterations (0 = off).
    pub checkpoint_every: usize,
    pub workers: usize,
    pub seed: u64,
    /// Desk-profile network (1024-bit input) instead of the full profile.
    pub desk_scale: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            epsilon_start: 0.2,
            epsilon_step: 0.05,
            epsilon_period: 200,
            warmup_iterations: 50,
            update_period: 50,
            new_entries_per_update: 4096,
            final_train_cap: 60_000,
            epochs_per_update: 12,
            final_epochs: 20,
            checkpoint_every: 0,
            workers: 1,
            seed: 0,
            desk_scale: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("iterations must be >= 1".into()));
        }
        if self.warmup_iterations >= self.iterations {
            return Err(Error::InvalidParameter(format!(
                "warmup_iterations ({}) must be < iterations ({})",
                self.warmup_iterations, self.iterations
            )));
        }
        if self.update_period == 0 {
            return Err(Error::InvalidParameter("update_period must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) {
            return Err(Error::InvalidParameter(format!(
                "epsilon_start must lie in [0,1], got {}",
                self.epsilon_start
            )));
        }
        if !(self.epsilon_step.is_finite() && self.epsilon_step >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "epsilon_step must be finite and >= 0, got {}",
                self.epsilon_step
            )));
        }
        if self.epsilon_period == 0 {
            return Err(Error::InvalidParameter("epsilon_period must be >= 1".into()));
        }
        if self.new_entries_per_update == 0 || self.final_train_cap == 0 {
            return Err(Error::InvalidParameter(
                "new_entries_per_update and final_train_cap must be >= 1".into(),
            ));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Per-iteration aggregates over the played episodes.
#[derive(Clone, Debug)]
pub struct IterationMetrics {
    pub iteration: usize,
    pub epsilon: f64,
    pub mean_cost: f64,
    pub mean_branching: f64,
    pub frac_lt_p1: f64,
    pub frac_mid: f64,
    pub frac_ge_p2: f64,
    pub success: f64,
    /// Store size right after any ε-transition purge, before this
    /// iteration's episodes merge (not part of the CSV).
    pub store_len_pre: usize,
}

/// CSV with one row per iteration; floats use shortest round-trip form.
pub fn metrics_to_csv(rows: &[IterationMetrics]) -> String {
    let mut out =
        String::from("iteration,epsilon,mean_cost,mean_branching,frac_lt_p1,frac_mid,frac_ge_p2,success\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iteration, r.epsilon, r.mean_cost, r.mean_branching, r.frac_lt_p1, r.frac_mid, r.frac_ge_p2, r.success
        );
    }
    out
}

/// Everything produced by one training run.
pub struct TrainOutcome {
    pub metrics: Vec<IterationMetrics>,
    pub store: ValueStore,
    pub network: ValueNetwork,
    pub reaction_network: ReactionNetwork,
    pub dp: DpResult,
    /// Mean exact minimum cost over the training targets at full depth.
    pub dp_mean: f64,
    pub final_fit: FitReport,
}

fn init_network(cfg: &TrainConfig) -> Result<ValueNetwork> {
    let ncfg = if cfg.desk_scale { NetworkConfig::desk(cfg.seed) } else { NetworkConfig::full(cfg.seed) };
    ValueNetwork::new(ncfg)
}

/// Runs the full policy-iteration loop. `run_dir` only matters when
/// checkpointing is enabled.
pub fn run_policy_iteration(
    u: &Universe,
    targets: &[Molecule],
    cfg: &TrainConfig,
    gc: &GameConfig,
    run_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    gc.validate()?;
    if targets.is_empty() {
        return Err(Error::InvalidInput("training needs at least one target".into()));
    }
    for t in targets {
        if !u.contains(t) {
            return Err(Error::InvalidInput(format!("target `{t}` is not a molecule of this universe")));
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Training(format!("failed to build worker pool: {e}")))?;

    let mut store = ValueStore::new();
    let mut net: Option<ValueNetwork> = None;
    let cache = EvalCache::new();
    let mut reaction_network = ReactionNetwork::new();
    let mut recent: HashSet<(Molecule, usize)> = HashSet::new();
    let mut metrics: Vec<IterationMetrics> = Vec::with_capacity(cfg.iterations);
    let mut prev_eps = cfg.epsilon_start;
    let mut update_idx: u64 = 0;

    for i in 0..cfg.iterations {
        let eps = anneal_epsilon(i, cfg.epsilon_start, cfg.epsilon_step, cfg.epsilon_period);
        if i > 0 && eps != prev_eps {
            // New exploration regime: realized costs from the old regime
            // no longer describe the current policy, so the running means
            // restart from scratch.
            store.purge();
            recent.clear();
        }
        prev_eps = eps;
        let store_len_pre = store.len();

        let mut order: Vec<usize> = (0..targets.len()).collect();
        order.shuffle(&mut rng::stream(&[cfg.seed, 0x54531, i as u64]));

        // Store and network are frozen for the whole iteration; each slot
        // has its own stream, so any worker count yields the same episodes.
        let episodes: Vec<EpisodeRecord> = {
            let values = LearnedValue::new(&store, net.as_ref(), &cache);
            let greedy = ValueGreedyPolicy::new(u, gc.clone(), &values, &cache);
            let policy = EpsilonGreedyPolicy::new(greedy, eps)?;
            pool.install(|| {
                order
                    .par_iter()
                    .enumerate()
                    .map(|(slot, &ti)| {
                        let mut r = rng::stream(&[cfg.seed, 0xB, i as u64, slot as u64]);
                        play_game(u, &policy, &targets[ti], gc, &mut r)
                    })
                    .collect::<Result<Vec<_>>>()
            })?
        };

        let mut cost_sum = 0.0;
        let mut br_sum = 0.0;
        let mut br_n = 0usize;
        let (mut lt, mut mid, mut ge, mut wins) = (0usize, 0usize, 0usize, 0usize);
        for ep in &episodes {
            store.record_episode(ep);
            reaction_network.accumulate(&ep.tree);
            for v in &ep.visit_costs {
                recent.insert((v.molecule.clone(), v.depth_left));
            }
            cost_sum += ep.total_cost;
            if let Some(b) = game::branching_factor(&ep.tree) {
                br_sum += b;
                br_n += 1;
            }
            if ep.total_cost < gc.p1 {
                lt += 1;
            } else if ep.total_cost < gc.p2 {
                mid += 1;
            } else {
                ge += 1;
            }
            if ep.outcome == Outcome::Win {
                wins += 1;
            }
        }
        let n = episodes.len() as f64;
        metrics.push(IterationMetrics {
            iteration: i,
            epsilon: eps,
            mean_cost: cost_sum / n,
            mean_branching: if br_n > 0 { br_sum / br_n as f64 } else { 0.0 },
            frac_lt_p1: lt as f64 / n,
            frac_mid: mid as f64 / n,
            frac_ge_p2: ge as f64 / n,
            success: wins as f64 / n,
            store_len_pre,
        });

        let due = (i + 1) >= cfg.warmup_iterations
            && (i + 1 - cfg.warmup_iterations) % cfg.update_period == 0;
        if due && !recent.is_empty() {
            let mut keys: Vec<(Molecule, usize)> = recent.drain().collect();
            keys.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
            if keys.len() > cfg.new_entries_per_update {
                keys.shuffle(&mut rng::stream(&[cfg.seed, 0x4E42, update_idx]));
                keys.truncate(cfg.new_entries_per_update);
            }
            let samples: Vec<TrainSample> = keys
                .iter()
                .filter_map(|(m, d)| {
                    store.mean(m, *d).map(|t| TrainSample {
                        molecule: m.clone(),
                        depth_left: *d,
                        target: t,
                    })
                })
                .collect();
            if !samples.is_empty() {
                if net.is_none() {
                    net = Some(init_network(cfg)?);
                }
                net.as_mut().unwrap().fit(&samples, cfg.epochs_per_update)?;
                cache.clear_net_values();
            }
            update_idx += 1;
        }

        if cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0 {
            if let (Some(dir), Some(nw)) = (run_dir, net.as_ref()) {
                fs::write(dir.join(format!("checkpoint-{:05}.bin", i + 1)), nw.to_bytes())?;
            }
        }
    }

    // Exact solve of everything ever seen, then retrain on exact values.
    let dp = min_cost_dp(&reaction_network, u, gc)?;
    let mut dp_sum = 0.0;
    for t in targets {
        dp_sum += dp
            .value_of(&reaction_network, t, gc.d_max)
            .ok_or_else(|| Error::Training(format!("target `{t}` missing from reaction network")))?;
    }
    let dp_mean = dp_sum / targets.len() as f64;

    let mut samples: Vec<TrainSample> = Vec::new();
    for id in 0..reaction_network.molecule_count() as u32 {
        let m = reaction_network.molecule(id);
        for d in 0..=gc.d_max {
            samples.push(TrainSample {
                molecule: m.clone(),
                depth_left: d,
                target: dp.value_by_id(id, d),
            });
        }
    }
    if samples.len() > cfg.final_train_cap {
        samples.shuffle(&mut rng::stream(&[cfg.seed, 0x46545]));
        samples.truncate(cfg.final_train_cap);
    }
    let mut network = match net.take() {
        Some(nw) => nw,
        None => init_network(cfg)?,
    };
    network.clear_buffer();
    let final_fit = network.fit(&samples, cfg.final_epochs)?;
    cache.clear_net_values();

    Ok(TrainOutcome { metrics, store, network, reaction_network, dp, dp_mean, final_fit })
}

/// Aggregates over `plays_per_target` games per target.
#[derive(Clone, Debug)]
pub struct EvalMetrics {
    pub mean_cost: f64,
    /// Standard error of the mean over all plays.
    pub se_cost: f64,
    pub mean_branching: f64,
    pub success: f64,
    pub plays: usize,
    pub costs: Vec<f64>,
}

pub fn evaluate_policy(
    u: &Universe,
    policy: &dyn ReactionPolicy,
    targets: &[Molecule],
    plays_per_target: usize,
    gc: &GameConfig,
    seed: u64,
) -> Result<EvalMetrics> {
    gc.validate()?;
    if targets.is_empty() || plays_per_target == 0 {
        return Err(Error::InvalidInput("evaluation needs targets and at least one play each".into()));
    }
    let mut costs = Vec::with_capacity(targets.len() * plays_per_target);
    let mut br_sum = 0.0;
    let mut br_n = 0usize;
    let mut wins = 0usize;
    for (ti, t) in targets.iter().enumerate() {
        for p in 0..plays_per_target {
            let mut r = rng::stream(&[seed, 0xE7A1, ti as u64, p as u64]);
            let ep = play_game(u, policy, t, gc, &mut r)?;
            costs.push(ep.total_cost);
            if let Some(b) = game::branching_factor(&ep.tree) {
                br_sum += b;
                br_n += 1;
            }
            if ep.outcome == Outcome::Win {
                wins += 1;
            }
        }
    }
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = if costs.len() > 1 {
        costs.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(EvalMetrics {
        mean_cost: mean,
        se_cost: (var / n).sqrt(),
        mean_branching: if br_n > 0 { br_sum / br_n as f64 } else { 0.0 },
        success: wins as f64 / n,
        plays: costs.len(),
        costs,
    })
}

/// One difficulty band of a head-to-head comparison.
#[derive(Clone, Debug)]
pub struct BandRow {
    pub label: &'static str,
    pub n: usize,
    pub a_cheaper_pct: f64,
    pub tie_pct: f64,
    pub b_cheaper_pct: f64,
}

/// Head-to-head result of two policies over the same targets, banded by
/// the second policy's realized cost.
#[derive(Clone, Debug)]
pub struct Comparison {
    pub a_name: String,
    pub b_name: String,
    pub a_mean: f64,
    pub b_mean: f64,
    pub a_costs: Vec<f64>,
    pub b_costs: Vec<f64>,
    pub rows: Vec<BandRow>,
}

/// Plays each target once under each policy and tabulates who was
/// cheaper, overall and within difficulty bands keyed by policy `b`'s
/// cost (below P1 / between P1 and P2 / at or above P2).
pub fn compare_policies(
    u: &Universe,
    a: &dyn ReactionPolicy,
    b: &dyn ReactionPolicy,
    targets: &[Molecule],
    gc: &GameConfig,
    seed: u64,
) -> Result<Comparison> {
    gc.validate()?;
    if targets.is_empty() {
        return Err(Error::InvalidInput("comparison needs at least one target".into()));
    }
    let mut a_costs = Vec::with_capacity(targets.len());
    let mut b_costs = Vec::with_capacity(targets.len());
    for (ti, t) in targets.iter().enumerate() {
        let mut ra = rng::stream(&[seed, 0xC0A, ti as u64]);
        a_costs.push(play_game(u, a, t, gc, &mut ra)?.total_cost);
        let mut rb = rng::stream(&[seed, 0xC0B, ti as u64]);
        b_costs.push(play_game(u, b, t, gc, &mut rb)?.total_cost);
    }
    let band = |row: &'static str, pred: &dyn Fn(f64) -> bool| -> BandRow {
        let mut n = 0usize;
        let (mut cheaper, mut tie, mut worse) = (0usize, 0usize, 0usize);
        for (&ca, &cb) in a_costs.iter().zip(&b_costs) {
            if !pred(cb) {
                continue;
            }
            n += 1;
            if (ca - cb).abs() < 1e-9 {
                tie += 1;
            } else if ca < cb {
                cheaper += 1;
            } else {
                worse += 1;
            }
        }
        let pct = |k: usize| if n > 0 { 100.0 * k as f64 / n as f64 } else { 0.0 };
        BandRow { label: row, n, a_cheaper_pct: pct(cheaper), tie_pct: pct(tie), b_cheaper_pct: pct(worse) }
    };
    let p1 = gc.p1;
    let p2 = gc.p2;
    let rows = vec![
        band("lt_p1", &|c| c < p1),
        band("mid", &|c| (p1..p2).contains(&c)),
        band("ge_p2", &|c| c >= p2),
        band("bulk", &|_| true),
    ];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(Comparison {
        a_name: a.name().to_string(),
        b_name: b.name().to_string(),
        a_mean: mean(&a_costs),
        b_mean: mean(&b_costs),
        a_costs,
        b_costs,
        rows,
    })
}

pub fn comparison_to_csv(c: &Comparison) -> String {
    let mut out = String::from("policy_a,policy_b,band,n,a_cheaper_pct,tie_pct,b_cheaper_pct\n");
    for r in &c.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.a_name, c.b_name, r.label, r.n, r.a_cheaper_pct, r.tie_pct, r.b_cheaper_pct
        );
    }
    out
}
