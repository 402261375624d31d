//! A complete miniature experiment: run the policy-iteration loop on a
//! small universe, watch the played cost fall as exploration anneals to
//! zero, then pit the learned value-greedy policy against the
//! symmetric-disconnection heuristic on held-out targets and measure the
//! gap to the exact dynamic-programming optimum.
//!
//!     cargo run --example train_and_compare [seed]

use retroplan::game::GameConfig;
use retroplan::policy::{SymmetricDisconnectionPolicy, ValueGreedyPolicy};
use retroplan::train::{
    compare_policies, comparison_to_csv, evaluate_policy, run_policy_iteration, TrainConfig,
};
use retroplan::universe::{select_targets, TargetParams, Universe, UniverseParams};
use retroplan::value::{EvalCache, LearnedValue};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let uparams = UniverseParams {
        molecule_count: 400,
        template_count: 24,
        ..UniverseParams::default()
    };
    let u = Universe::generate(seed, uparams).unwrap();
    let tparams = TargetParams { n_train: 40, n_test: 20, ..TargetParams::default() };
    let targets = select_targets(&u, &tparams, seed).unwrap();
    let gc = GameConfig::default();
    println!(
        "universe: {} molecules, {} templates; {} train / {} test targets",
        u.pool().len(),
        u.templates().len(),
        targets.train.len(),
        targets.test.len()
    );

    let cfg = TrainConfig {
        iterations: 60,
        epsilon_start: 0.2,
        epsilon_step: 0.05,
        epsilon_period: 12,
        warmup_iterations: 8,
        update_period: 4,
        epochs_per_update: 6,
        final_epochs: 12,
        workers: 2,
        seed,
        ..TrainConfig::default()
    };
    println!(
        "training: {} iterations, ε {} → 0 in steps of {} every {}, {} workers\n",
        cfg.iterations, cfg.epsilon_start, cfg.epsilon_step, cfg.epsilon_period, cfg.workers
    );

    let out = run_policy_iteration(&u, &targets.train, &cfg, &gc, None).unwrap();

    println!("iteration  ε      ⟨cost⟩    ⟨branching⟩  success");
    for r in out.metrics.iter().step_by(12).chain(out.metrics.last().into_iter()) {
        println!(
            "{:>9}  {:<5} {:>8.2}  {:>11.3}  {:>7.3}",
            r.iteration, r.epsilon, r.mean_cost, r.mean_branching, r.success
        );
    }
    let first = out.metrics.first().unwrap();
    let last = out.metrics.last().unwrap();
    println!(
        "\nplayed mean cost: {:.2} → {:.2} ({:.0}% of the first iteration)",
        first.mean_cost,
        last.mean_cost,
        100.0 * last.mean_cost / first.mean_cost
    );
    assert!(last.mean_cost < first.mean_cost, "training did not improve played cost");

    // Exact optimum over everything the run discovered.
    println!("DP optimum over the discovered network: ⟨cost⟩ = {:.2}", out.dp_mean);
    assert!(out.dp_mean <= last.mean_cost + 1e-9, "play cannot beat the DP bound");
    println!(
        "final value fit: k={} lr={:.2e} train-MAE={:.2}",
        out.final_fit.k_before, out.final_fit.lr, out.final_fit.train_mae
    );

    // --- learned policy vs the hand heuristic ---------------------------
    let cache = EvalCache::new();
    let learned = LearnedValue::new(&out.store, Some(&out.network), &cache);
    let value_policy = ValueGreedyPolicy::new(&u, gc.clone(), &learned, &cache);
    let sd_policy = SymmetricDisconnectionPolicy::new(1.5).unwrap();

    println!("\n{:<22} {:>12} {:>12}", "policy", "train ⟨c⟩", "test ⟨c⟩");
    let mut table = Vec::new();
    let names: [(&str, &dyn retroplan::policy::ReactionPolicy); 2] =
        [("value-greedy", &value_policy), ("symmetric-disc γ=1.5", &sd_policy)];
    for (name, p) in names {
        let tr = evaluate_policy(&u, p, &targets.train, 1, &gc, seed).unwrap();
        let te = evaluate_policy(&u, p, &targets.test, 1, &gc, seed).unwrap();
        println!("{:<22} {:>12.2} {:>12.2}", name, tr.mean_cost, te.mean_cost);
        table.push((tr.mean_cost, te.mean_cost));
    }
    assert!(
        table[0].0 <= table[1].0,
        "value-greedy should not lose to the heuristic on its own training targets"
    );

    // Per-band head-to-head on the test split, banded by heuristic cost.
    let cmp = compare_policies(&u, &value_policy, &sd_policy, &targets.test, &gc, seed).unwrap();
    println!("\nhead-to-head on test targets (bands keyed by heuristic cost):");
    print!("{}", comparison_to_csv(&cmp));
}
