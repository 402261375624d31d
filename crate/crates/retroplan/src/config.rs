//! Flat `key = value` run configuration shared by every subcommand.
//!
//! Precedence, lowest to highest: built-in defaults, config file,
//! `RETROPLAN_<KEY>` environment variables, command-line flags. Unknown
//! keys are rejected by name. The canonical serialization (sorted keys,
//! shortest round-trip floats) feeds the run-directory digest, so a run
//! directory name pins the exact configuration that produced it.

use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::game::GameConfig;
use crate::policy::PolicyKind;
use crate::train::TrainConfig;
use crate::universe::{TargetParams, UniverseParams};

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    // Shared seed for universe, targets, training and evaluation streams.
    pub seed: u64,
    // Universe generation.
    pub molecule_count: usize,
    pub template_count: usize,
    pub buyable_fraction: f64,
    pub dead_end_fraction: f64,
    pub alphabet_size: usize,
    pub max_len: usize,
    pub min_compound_len: usize,
    pub foundation_len: usize,
    pub max_reactions_per_molecule: usize,
    pub price_spread: f64,
    // Game constants.
    pub d_max: usize,
    pub c_rxn: f64,
    pub c_sub: f64,
    pub p1: f64,
    pub p2: f64,
    // Target selection.
    pub train_targets: usize,
    pub test_targets: usize,
    pub similarity_threshold: f64,
    pub target_min_len: usize,
    pub target_max_len: usize,
    // Policy selection (play / evaluate).
    pub policy: String,
    pub gamma: f64,
    pub epsilon: f64,
    // Training loop.
    pub iterations: usize,
    pub epsilon_start: f64,
    pub epsilon_step: f64,
    pub epsilon_period: usize,
    pub warmup_iterations: usize,
    pub update_period: usize,
    pub new_entries_per_update: usize,
    pub final_train_cap: usize,
    pub epochs_per_update: usize,
    pub final_epochs: usize,
    pub checkpoint_every: usize,
    pub workers: usize,
    pub desk_scale: bool,
    // Evaluation.
    pub plays_per_target: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let up = UniverseParams::default();
        let tc = TrainConfig::default();
        let tp = TargetParams::default();
        RunConfig {
            seed: 0,
            molecule_count: up.molecule_count,
            template_count: up.template_count,
            buyable_fraction: up.buyable_fraction,
            dead_end_fraction: up.dead_end_fraction,
            alphabet_size: up.alphabet_size,
            max_len: up.max_len,
            min_compound_len: up.min_compound_len,
            foundation_len: up.foundation_len,
            max_reactions_per_molecule: up.max_reactions_per_molecule,
            price_spread: up.price_spread,
            d_max: 10,
            c_rxn: 1.0,
            c_sub: 0.0,
            p1: 10.0,
            p2: 100.0,
            train_targets: tp.n_train,
            test_targets: tp.n_test,
            similarity_threshold: tp.similarity_threshold,
            target_min_len: tp.min_len,
            target_max_len: tp.max_len,
            policy: "sd".to_string(),
            gamma: 1.5,
            epsilon: 0.0,
            iterations: tc.iterations,
            epsilon_start: tc.epsilon_start,
            epsilon_step: tc.epsilon_step,
            epsilon_period: tc.epsilon_period,
            warmup_iterations: tc.warmup_iterations,
            update_period: tc.update_period,
            new_entries_per_update: tc.new_entries_per_update,
            final_train_cap: tc.final_train_cap,
            epochs_per_update: tc.epochs_per_update,
            final_epochs: tc.final_epochs,
            checkpoint_every: tc.checkpoint_every,
            workers: tc.workers,
            desk_scale: tc.desk_scale,
            plays_per_target: 1,
        }
    }
}

fn parse_as<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse::<T>().map_err(|_| Error::Config {
        key: key.to_string(),
        message: format!("cannot parse `{}` as {}", value.trim(), std::any::type_name::<T>()),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config {
            key: key.to_string(),
            message: format!("cannot parse `{other}` as bool (true/false)"),
        }),
    }
}

impl RunConfig {
    /// Every key with its current value, in canonical (sorted) order.
    /// This list is the single source of truth for key names; the set of
    /// keys accepted by [`RunConfig::set`] is exactly this set.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let mut rows: Vec<(&'static str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("molecule_count", self.molecule_count.to_string()),
            ("template_count", self.template_count.to_string()),
            ("buyable_fraction", self.buyable_fraction.to_string()),
            ("dead_end_fraction", self.dead_end_fraction.to_string()),
            ("alphabet_size", self.alphabet_size.to_string()),
            ("max_len", self.max_len.to_string()),
            ("min_compound_len", self.min_compound_len.to_string()),
            ("foundation_len", self.foundation_len.to_string()),
            ("max_reactions_per_molecule", self.max_reactions_per_molecule.to_string()),
            ("price_spread", self.price_spread.to_string()),
            ("d_max", self.d_max.to_string()),
            ("c_rxn", self.c_rxn.to_string()),
            ("c_sub", self.c_sub.to_string()),
            ("p1", self.p1.to_string()),
            ("p2", self.p2.to_string()),
            ("train_targets", self.train_targets.to_string()),
            ("test_targets", self.test_targets.to_string()),
            ("similarity_threshold", self.similarity_threshold.to_string()),
            ("target_min_len", self.target_min_len.to_string()),
            ("target_max_len", self.target_max_len.to_string()),
            ("policy", self.policy.clone()),
            ("gamma", self.gamma.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("iterations", self.iterations.to_string()),
            ("epsilon_start", self.epsilon_start.to_string()),
            ("epsilon_step", self.epsilon_step.to_string()),
            ("epsilon_period", self.epsilon_period.to_string()),
            ("warmup_iterations", self.warmup_iterations.to_string()),
            ("update_period", self.update_period.to_string()),
            ("new_entries_per_update", self.new_entries_per_update.to_string()),
            ("final_train_cap", self.final_train_cap.to_string()),
            ("epochs_per_update", self.epochs_per_update.to_string()),
            ("final_epochs", self.final_epochs.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("workers", self.workers.to_string()),
            ("desk_scale", self.desk_scale.to_string()),
            ("plays_per_target", self.plays_per_target.to_string()),
        ];
        rows.sort_by_key(|(k, _)| *k);
        rows
    }

    /// Sets one key from its text form; unknown keys are an error naming
    /// the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse_as(key, value)?,
            "molecule_count" => self.molecule_count = parse_as(key, value)?,
            "template_count" => self.template_count = parse_as(key, value)?,
            "buyable_fraction" => self.buyable_fraction = parse_as(key, value)?,
            "dead_end_fraction" => self.dead_end_fraction = parse_as(key, value)?,
            "alphabet_size" => self.alphabet_size = parse_as(key, value)?,
            "max_len" => self.max_len = parse_as(key, value)?,
            "min_compound_len" => self.min_compound_len = parse_as(key, value)?,
            "foundation_len" => self.foundation_len = parse_as(key, value)?,
            "max_reactions_per_molecule" => self.max_reactions_per_molecule = parse_as(key, value)?,
            "price_spread" => self.price_spread = parse_as(key, value)?,
            "d_max" => self.d_max = parse_as(key, value)?,
            "c_rxn" => self.c_rxn = parse_as(key, value)?,
            "c_sub" => self.c_sub = parse_as(key, value)?,
            "p1" => self.p1 = parse_as(key, value)?,
            "p2" => self.p2 = parse_as(key, value)?,
            "train_targets" => self.train_targets = parse_as(key, value)?,
            "test_targets" => self.test_targets = parse_as(key, value)?,
            "similarity_threshold" => self.similarity_threshold = parse_as(key, value)?,
            "target_min_len" => self.target_min_len = parse_as(key, value)?,
            "target_max_len" => self.target_max_len = parse_as(key, value)?,
            "policy" => self.policy = value.trim().to_string(),
            "gamma" => self.gamma = parse_as(key, value)?,
            "epsilon" => self.epsilon = parse_as(key, value)?,
            "iterations" => self.iterations = parse_as(key, value)?,
            "epsilon_start" => self.epsilon_start = parse_as(key, value)?,
            "epsilon_step" => self.epsilon_step = parse_as(key, value)?,
            "epsilon_period" => self.epsilon_period = parse_as(key, value)?,
            "warmup_iterations" => self.warmup_iterations = parse_as(key, value)?,
            "update_period" => self.update_period = parse_as(key, value)?,
            "new_entries_per_update" => self.new_entries_per_update = parse_as(key, value)?,
            "final_train_cap" => self.final_train_cap = parse_as(key, value)?,
            "epochs_per_update" => self.epochs_per_update = parse_as(key, value)?,
            "final_epochs" => self.final_epochs = parse_as(key, value)?,
            "checkpoint_every" => self.checkpoint_every = parse_as(key, value)?,
            "workers" => self.workers = parse_as(key, value)?,
            "desk_scale" => self.desk_scale = parse_bool(key, value)?,
            "plays_per_target" => self.plays_per_target = parse_as(key, value)?,
            other => {
                return Err(Error::Config {
                    key: other.to_string(),
                    message: "unknown configuration key".to_string(),
                })
            }
        }
        Ok(())
    }

    /// Merges a flat `key = value` file into `self`. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                key: format!("line {}", no + 1),
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    /// Applies `RETROPLAN_<KEY>` environment overrides for every known
    /// key (key upper-cased).
    pub fn merge_env(&mut self) -> Result<()> {
        let keys: Vec<&'static str> = self.entries().iter().map(|(k, _)| *k).collect();
        for key in keys {
            if let Ok(value) = std::env::var(format!("RETROPLAN_{}", key.to_uppercase())) {
                self.set(key, &value)?;
            }
        }
        Ok(())
    }

    /// Canonical text form: sorted `key = value` lines.
    pub fn canonical_string(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// First 8 hex characters of the SHA-256 of the canonical form.
    pub fn digest8(&self) -> String {
        let hash = Sha256::digest(self.canonical_string().as_bytes());
        hash.iter().take(4).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn universe_params(&self) -> UniverseParams {
        UniverseParams {
            molecule_count: self.molecule_count,
            template_count: self.template_count,
            buyable_fraction: self.buyable_fraction,
            dead_end_fraction: self.dead_end_fraction,
            alphabet_size: self.alphabet_size,
            max_len: self.max_len,
            min_compound_len: self.min_compound_len,
            foundation_len: self.foundation_len,
            max_reactions_per_molecule: self.max_reactions_per_molecule,
            reaction_cost: self.c_rxn,
            price_base: self.c_sub,
            price_spread: self.price_spread,
        }
    }

    pub fn game_config(&self) -> GameConfig {
        GameConfig {
            d_max: self.d_max,
            c_rxn_default: self.c_rxn,
            c_sub_default: self.c_sub,
            p1: self.p1,
            p2: self.p2,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            iterations: self.iterations,
            epsilon_start: self.epsilon_start,
            epsilon_step: self.epsilon_step,
            epsilon_period: self.epsilon_period,
            warmup_iterations: self.warmup_iterations,
            update_period: self.update_period,
            new_entries_per_update: self.new_entries_per_update,
            final_train_cap: self.final_train_cap,
            epochs_per_update: self.epochs_per_update,
            final_epochs: self.final_epochs,
            checkpoint_every: self.checkpoint_every,
            workers: self.workers,
            seed: self.seed,
            desk_scale: self.desk_scale,
        }
    }

    pub fn target_params(&self) -> TargetParams {
        TargetParams {
            n_train: self.train_targets,
            n_test: self.test_targets,
            similarity_threshold: self.similarity_threshold,
            min_len: self.target_min_len,
            max_len: self.target_max_len,
            ..TargetParams::default()
        }
    }

    pub fn policy_kind(&self) -> Result<PolicyKind> {
        PolicyKind::parse(&self.policy, self.gamma, self.epsilon)
    }

    /// Cross-field validation used by every subcommand before work starts.
    pub fn validate(&self) -> Result<()> {
        self.game_config().validate()?;
        self.train_config().validate()?;
        self.policy_kind()?;
        if self.plays_per_target == 0 {
            return Err(Error::Config {
                key: "plays_per_target".into(),
                message: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}
