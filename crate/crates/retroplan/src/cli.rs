//! Command-line interface: configuration assembly, subcommand dispatch,
//! and run-directory artifacts.
//!
//! Configuration precedence, lowest to highest: defaults, `--config`
//! file, `RETROPLAN_<KEY>` environment variables, explicit flags. Every
//! subcommand that needs a universe regenerates it from the merged
//! configuration (or loads a `--universe` file, which is verified
//! against regeneration byte for byte), so artifacts are reproducible
//! from configuration and seeds alone.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::dp::{min_cost_dp, ReactionNetwork};
use crate::error::{Error, Result};
use crate::game::{self, play_game, EpisodeRecord, GameConfig};
use crate::policy::{
    EpsilonGreedyPolicy, PolicyKind, RandomPolicy, ReactionPolicy, SymmetricDisconnectionPolicy,
    ValueGreedyPolicy,
};
use crate::rng;
use crate::train::{
    compare_policies, comparison_to_csv, evaluate_policy, metrics_to_csv, run_policy_iteration,
    Comparison, EvalMetrics,
};
use crate::universe::{select_targets, Molecule, Universe};
use crate::value::{EvalCache, LearnedValue, ValueNetwork, ValueStore};

#[derive(Parser, Debug)]
#[command(
    name = "retroplan",
    version,
    about = "Policy iteration for the retrosynthesis game on seeded synthetic reaction universes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Master seed for universe, targets, training and evaluation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for the trainer's game phase.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Policy name: random | sd | sd-eps | value.
    #[arg(long, global = true)]
    pub policy: Option<String>,

    /// Heuristic exponent γ.
    #[arg(long, global = true)]
    pub gamma: Option<f64>,

    /// Exploration rate ε for sd-eps.
    #[arg(long, global = true)]
    pub epsilon: Option<f64>,

    /// Training iterations.
    #[arg(long, global = true)]
    pub iterations: Option<usize>,

    /// Use the small desk-scale network profile (true) or the full
    /// 17M-parameter profile (false).
    #[arg(long, global = true)]
    pub desk_scale: Option<bool>,

    /// Run directory override (default: runs/<timestamp>-<config digest>).
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,

    /// Universe file to load instead of regenerating (verified against
    /// regeneration).
    #[arg(long, global = true)]
    pub universe: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate the configured universe, write it to a file and print its
    /// digest.
    GenUniverse {
        /// Output path (default: universe.txt in the working directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Play one game against a target and print the synthesis tree.
    Play {
        /// Target molecule (canonical string).
        #[arg(long)]
        target: String,
        /// Run directory providing store/weights for the `value` policy.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Run the policy-iteration trainer and write all run artifacts.
    Train,
    /// Evaluate the configured policy on selected targets.
    Evaluate {
        /// Which target split to evaluate: train | test.
        #[arg(long, default_value = "test")]
        split: String,
        /// Optional CSV output path (default: print to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run directory providing store/weights for the `value` policy.
        #[arg(long)]
        run_dir: Option<PathBuf>,
    },
    /// Solve a stored reaction network exactly and export the DP table.
    Dp {
        /// Reaction-network file (default: <run-dir>/network.txt).
        #[arg(long)]
        network: Option<PathBuf>,
        /// Run directory to read the network from and write dp.csv into.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Explicit output path for the DP CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare learned play against the heuristic over a finished run.
    Report {
        /// Run directory produced by `train`.
        #[arg(long)]
        run_dir: PathBuf,
    },
}

/// Merges defaults, config file, environment and flags into the final
/// configuration.
pub fn build_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.merge_file(path)?;
    }
    cfg.merge_env()?;
    if let Some(v) = cli.seed {
        cfg.seed = v;
    }
    if let Some(v) = cli.workers {
        cfg.workers = v;
    }
    if let Some(v) = &cli.policy {
        cfg.policy = v.clone();
    }
    if let Some(v) = cli.gamma {
        cfg.gamma = v;
    }
    if let Some(v) = cli.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = cli.iterations {
        cfg.iterations = v;
    }
    if let Some(v) = cli.desk_scale {
        cfg.desk_scale = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn obtain_universe(cli: &Cli, cfg: &RunConfig) -> Result<Universe> {
    match &cli.universe {
        Some(path) => Universe::load_file(path),
        None => Universe::generate(cfg.seed, cfg.universe_params()),
    }
}

fn default_run_dir(cfg: &RunConfig) -> PathBuf {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    PathBuf::from("runs").join(format!("{secs}-{}", cfg.digest8()))
}

/// Store and weights loaded from a finished run, if present.
struct RunArtifacts {
    store: ValueStore,
    net: Option<ValueNetwork>,
}

impl RunArtifacts {
    fn empty() -> Self {
        RunArtifacts { store: ValueStore::new(), net: None }
    }

    fn load(run_dir: &Path) -> Result<Self> {
        let store_path = run_dir.join("store.txt");
        let store = if store_path.exists() {
            ValueStore::parse(&fs::read_to_string(&store_path)?)?
        } else {
            ValueStore::new()
        };
        let weights_path = run_dir.join("weights.bin");
        let net = if weights_path.exists() {
            Some(ValueNetwork::from_bytes(&fs::read(&weights_path)?)?)
        } else {
            None
        };
        Ok(RunArtifacts { store, net })
    }
}

/// Runs `body` with the policy described by `kind`. The `value` policy
/// reads the store/network out of `artifacts`.
fn with_policy<T>(
    kind: &PolicyKind,
    u: &Universe,
    gc: &GameConfig,
    artifacts: &RunArtifacts,
    cache: &EvalCache,
    body: &mut dyn FnMut(&dyn ReactionPolicy) -> Result<T>,
) -> Result<T> {
    match kind {
        PolicyKind::Random => body(&RandomPolicy),
        PolicyKind::SymmetricDisconnection { gamma } => {
            body(&SymmetricDisconnectionPolicy::new(*gamma)?)
        }
        PolicyKind::SdEpsilon { gamma, epsilon } => {
            body(&EpsilonGreedyPolicy::new(SymmetricDisconnectionPolicy::new(*gamma)?, *epsilon)?)
        }
        PolicyKind::ValueGreedy => {
            let values = LearnedValue::new(&artifacts.store, artifacts.net.as_ref(), cache);
            body(&ValueGreedyPolicy::new(u, gc.clone(), &values, cache))
        }
    }
}

fn write_or_print(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent)?;
                }
            }
            fs::write(path, content)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn episode_summary(ep: &EpisodeRecord) -> String {
    let branching = match game::branching_factor(&ep.tree) {
        Some(b) => b.to_string(),
        None => "n/a".to_string(),
    };
    format!(
        "outcome={} cost={} branching={} nodes={}",
        ep.outcome.label(),
        ep.total_cost,
        branching,
        ep.visit_costs.len()
    )
}

fn cmd_gen_universe(cli: &Cli, cfg: &RunConfig, out: Option<&Path>) -> Result<()> {
    let u = obtain_universe(cli, cfg)?;
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("universe.txt"));
    u.write_file(&path)?;
    println!("universe {} digest {}", path.display(), u.digest());
    println!(
        "molecules={} templates={} buyables={}",
        u.pool().len(),
        u.templates().len(),
        u.buyable_map().len()
    );
    Ok(())
}

fn cmd_play(cli: &Cli, cfg: &RunConfig, target: &str, run_dir: Option<&Path>) -> Result<()> {
    let u = obtain_universe(cli, cfg)?;
    let gc = cfg.game_config();
    let kind = cfg.policy_kind()?;
    let artifacts = match run_dir {
        Some(dir) => RunArtifacts::load(dir)?,
        None => RunArtifacts::empty(),
    };
    let cache = EvalCache::new();
    let target = Molecule::new(target);
    let ep = with_policy(&kind, &u, &gc, &artifacts, &cache, &mut |p| {
        let mut r = rng::stream(&[cfg.seed, 0x504C41]);
        play_game(&u, p, &target, &gc, &mut r)
    })?;
    print!("{}", game::tree_to_string(&ep.tree));
    println!("{}", episode_summary(&ep));
    Ok(())
}

fn cmd_train(cli: &Cli, cfg: &RunConfig) -> Result<()> {
    let u = obtain_universe(cli, cfg)?;
    let sel = select_targets(&u, &cfg.target_params(), cfg.seed)?;
    let run_dir = cli.out_dir.clone().unwrap_or_else(|| default_run_dir(cfg));
    fs::create_dir_all(&run_dir)?;
    fs::write(run_dir.join("config.txt"), cfg.canonical_string())?;
    fs::write(run_dir.join("targets-train.txt"), molecules_to_lines(&sel.train))?;
    fs::write(run_dir.join("targets-test.txt"), molecules_to_lines(&sel.test))?;

    let outcome =
        run_policy_iteration(&u, &sel.train, &cfg.train_config(), &cfg.game_config(), Some(&run_dir))?;

    fs::write(run_dir.join("metrics.csv"), metrics_to_csv(&outcome.metrics))?;
    fs::write(run_dir.join("weights.bin"), outcome.network.to_bytes())?;
    fs::write(run_dir.join("store.txt"), outcome.store.serialize())?;
    fs::write(run_dir.join("network.txt"), outcome.reaction_network.serialize())?;
    fs::write(run_dir.join("dp.csv"), outcome.dp.to_csv(&outcome.reaction_network))?;

    let first = outcome.metrics.first().expect("at least one iteration");
    let last = outcome.metrics.last().expect("at least one iteration");
    let mut summary = String::new();
    let _ = writeln!(summary, "universe_digest = {}", u.digest());
    let _ = writeln!(summary, "train_targets = {}", sel.train.len());
    let _ = writeln!(summary, "test_targets = {}", sel.test.len());
    let _ = writeln!(summary, "iterations = {}", outcome.metrics.len());
    let _ = writeln!(summary, "first_mean_cost = {}", first.mean_cost);
    let _ = writeln!(summary, "final_mean_cost = {}", last.mean_cost);
    let _ = writeln!(summary, "final_success = {}", last.success);
    let _ = writeln!(summary, "dp_mean_cost = {}", outcome.dp_mean);
    let _ = writeln!(summary, "store_entries = {}", outcome.store.len());
    let _ = writeln!(summary, "network_molecules = {}", outcome.reaction_network.molecule_count());
    let _ = writeln!(summary, "network_reactions = {}", outcome.reaction_network.reaction_count());
    let _ = writeln!(summary, "final_fit_train_mae = {}", outcome.final_fit.train_mae);
    fs::write(run_dir.join("summary.txt"), &summary)?;

    println!("run {}", run_dir.display());
    println!(
        "iterations={} first_mean_cost={} final_mean_cost={} dp_mean_cost={}",
        outcome.metrics.len(),
        first.mean_cost,
        last.mean_cost,
        outcome.dp_mean
    );
    Ok(())
}

fn molecules_to_lines(ms: &[Molecule]) -> String {
    let mut out = String::new();
    for m in ms {
        let _ = writeln!(out, "{m}");
    }
    out
}

fn eval_to_csv(policy: &str, split: &str, plays: usize, targets: usize, m: &EvalMetrics) -> String {
    let mut out =
        String::from("policy,split,targets,plays_per_target,mean_cost,se_cost,mean_branching,success\n");
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{}",
        policy, split, targets, plays, m.mean_cost, m.se_cost, m.mean_branching, m.success
    );
    out
}

fn cmd_evaluate(
    cli: &Cli,
    cfg: &RunConfig,
    split: &str,
    out: Option<&Path>,
    run_dir: Option<&Path>,
) -> Result<()> {
    let u = obtain_universe(cli, cfg)?;
    let sel = select_targets(&u, &cfg.target_params(), cfg.seed)?;
    let targets = match split {
        "train" => &sel.train,
        "test" => &sel.test,
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown split `{other}` (expected train|test)"
            )))
        }
    };
    if targets.is_empty() {
        return Err(Error::InvalidInput(format!("split `{split}` selected no targets")));
    }
    let gc = cfg.game_config();
    let kind = cfg.policy_kind()?;
    let artifacts = match run_dir {
        Some(dir) => RunArtifacts::load(dir)?,
        None => RunArtifacts::empty(),
    };
    let cache = EvalCache::new();
    let metrics = with_policy(&kind, &u, &gc, &artifacts, &cache, &mut |p| {
        evaluate_policy(&u, p, targets, cfg.plays_per_target, &gc, cfg.seed)
    })?;
    let csv = eval_to_csv(&cfg.policy, split, cfg.plays_per_target, targets.len(), &metrics);
    write_or_print(out, &csv)
}

fn cmd_dp(
    cli: &Cli,
    cfg: &RunConfig,
    network: Option<&Path>,
    run_dir: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let network_path = match (network, run_dir) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(dir)) => dir.join("network.txt"),
        (None, None) => {
            return Err(Error::InvalidInput("dp needs --network or --run-dir".into()))
        }
    };
    let u = obtain_universe(cli, cfg)?;
    let net = ReactionNetwork::parse(&fs::read_to_string(&network_path)?)?;
    let gc = cfg.game_config();
    let dp = min_cost_dp(&net, &u, &gc)?;
    let csv = dp.to_csv(&net);
    let out_path = out
        .map(Path::to_path_buf)
        .or_else(|| run_dir.map(|d| d.join("dp.csv")));
    write_or_print(out_path.as_deref(), &csv)?;
    if out_path.is_some() {
        println!(
            "molecules={} reactions={} records={}",
            net.molecule_count(),
            net.reaction_count(),
            net.molecule_count() * (gc.d_max + 1)
        );
    }
    Ok(())
}

fn parse_summary_value(summary: &str, key: &str) -> Option<f64> {
    summary.lines().find_map(|line| {
        let (k, v) = line.split_once('=')?;
        if k.trim() == key {
            v.trim().parse().ok()
        } else {
            None
        }
    })
}

fn comparison_headline(label: &str, c: &Comparison) -> String {
    let bulk = c.rows.iter().find(|r| r.label == "bulk").expect("bulk row always present");
    format!(
        "{label}: value_mean={} sd_mean={} ties_or_beats_pct={}",
        c.a_mean,
        c.b_mean,
        bulk.a_cheaper_pct + bulk.tie_pct
    )
}

fn cmd_report(cli: &Cli, run_dir: &Path) -> Result<()> {
    // A report describes a finished run, so it reproduces that run's own
    // configuration rather than the caller's current flags.
    let mut cfg = RunConfig::default();
    cfg.merge_file(&run_dir.join("config.txt"))?;
    cfg.validate()?;
    let u = obtain_universe(cli, &cfg)?;
    let sel = select_targets(&u, &cfg.target_params(), cfg.seed)?;
    let gc = cfg.game_config();
    let artifacts = RunArtifacts::load(run_dir)?;
    let cache = EvalCache::new();

    let metrics_text = fs::read_to_string(run_dir.join("metrics.csv"))?;
    let final_played_mean: f64 = metrics_text
        .lines()
        .last()
        .and_then(|line| line.split(',').nth(2))
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Format("metrics.csv has no parsable final row".into()))?;

    let net = ReactionNetwork::parse(&fs::read_to_string(run_dir.join("network.txt"))?)?;
    let dp = min_cost_dp(&net, &u, &gc)?;
    let mut dp_sum = 0.0;
    for t in &sel.train {
        dp_sum += dp
            .value_of(&net, t, gc.d_max)
            .ok_or_else(|| Error::Lookup(format!("train target `{t}` missing from network.txt")))?;
    }
    let dp_mean = dp_sum / sel.train.len() as f64;

    let values = LearnedValue::new(&artifacts.store, artifacts.net.as_ref(), &cache);
    let value_policy = ValueGreedyPolicy::new(&u, gc.clone(), &values, &cache);
    let sd = SymmetricDisconnectionPolicy::new(cfg.gamma)?;
    let train_cmp = compare_policies(&u, &value_policy, &sd, &sel.train, &gc, cfg.seed)?;
    fs::write(run_dir.join("comparison-train.csv"), comparison_to_csv(&train_cmp))?;
    let test_cmp = if sel.test.is_empty() {
        None
    } else {
        let c = compare_policies(&u, &value_policy, &sd, &sel.test, &gc, cfg.seed)?;
        fs::write(run_dir.join("comparison-test.csv"), comparison_to_csv(&c))?;
        Some(c)
    };

    let mut report = String::new();
    let _ = writeln!(report, "final_played_mean = {final_played_mean}");
    let _ = writeln!(report, "dp_mean = {dp_mean}");
    let _ = writeln!(report, "dp_le_final_played = {}", dp_mean <= final_played_mean);
    let _ = writeln!(report, "train_value_mean = {}", train_cmp.a_mean);
    let _ = writeln!(report, "train_sd_mean = {}", train_cmp.b_mean);
    if let Some(c) = &test_cmp {
        let bulk = c.rows.iter().find(|r| r.label == "bulk").expect("bulk row always present");
        let _ = writeln!(report, "test_value_mean = {}", c.a_mean);
        let _ = writeln!(report, "test_sd_mean = {}", c.b_mean);
        let _ = writeln!(report, "test_ties_or_beats_pct = {}", bulk.a_cheaper_pct + bulk.tie_pct);
    }
    fs::write(run_dir.join("report.txt"), &report)?;

    println!("{}", comparison_headline("train", &train_cmp));
    if let Some(c) = &test_cmp {
        println!("{}", comparison_headline("test", c));
    }
    println!("dp_mean={dp_mean} final_played_mean={final_played_mean} dp_le_final_played={}",
        dp_mean <= final_played_mean);
    // Consistency note against the stored summary, if present.
    if let Ok(summary) = fs::read_to_string(run_dir.join("summary.txt")) {
        if let Some(stored) = parse_summary_value(&summary, "dp_mean_cost") {
            if (stored - dp_mean).abs() > 1e-9 {
                println!("note: recomputed dp_mean {dp_mean} differs from stored {stored}");
            }
        }
    }
    Ok(())
}

/// Executes a parsed command line; errors bubble up to [`main_entry`].
pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::GenUniverse { out } => {
            let cfg = build_config(cli)?;
            cmd_gen_universe(cli, &cfg, out.as_deref())
        }
        Command::Play { target, run_dir } => {
            let cfg = build_config(cli)?;
            cmd_play(cli, &cfg, target, run_dir.as_deref())
        }
        Command::Train => {
            let cfg = build_config(cli)?;
            cmd_train(cli, &cfg)
        }
        Command::Evaluate { split, out, run_dir } => {
            let cfg = build_config(cli)?;
            cmd_evaluate(cli, &cfg, split, out.as_deref(), run_dir.as_deref())
        }
        Command::Dp { network, run_dir, out } => {
            let cfg = build_config(cli)?;
            cmd_dp(cli, &cfg, network.as_deref(), run_dir.as_deref(), out.as_deref())
        }
        Command::Report { run_dir } => cmd_report(cli, run_dir),
    }
}

/// Binary entry point: parse, dispatch, map errors to a one-line
/// machine-parsable record on stderr and exit status 1.
pub fn main_entry() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        let msg = e.to_string().replace('\n', "; ");
        eprintln!("error category={} message={}", e.category(), msg);
        std::process::exit(1);
    }
}
