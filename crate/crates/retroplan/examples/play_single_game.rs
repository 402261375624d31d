//! Play one retrosynthesis game and audit its synthesis tree.
//!
//! A game recursively decomposes the target: buyable molecules close as
//! leaves at their price, non-buyables at residual depth 0 incur the P1
//! penalty, molecules with no applicable reactions incur P2, and
//! otherwise the policy picks one candidate reaction whose reactants are
//! played one level deeper.
//!
//!     cargo run --example play_single_game [seed]

use retroplan::game::{self, play_game, GameConfig};
use retroplan::policy::{RandomPolicy, SymmetricDisconnectionPolicy};
use retroplan::rng;
use retroplan::universe::{Universe, UniverseParams};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let u = Universe::generate(seed, UniverseParams::default()).unwrap();
    let gc = GameConfig::default();
    println!(
        "game constants: d_max={} c_rxn={} P1={} P2={}\n",
        gc.d_max, gc.c_rxn_default, gc.p1, gc.p2
    );

    // Pick a mid-sized non-buyable target with at least one reaction.
    let target = u
        .pool()
        .iter()
        .find(|m| !u.is_buyable(m) && m.size() >= 8 && !u.expand(m).is_empty())
        .expect("the pool has expandable compounds");

    let sd = SymmetricDisconnectionPolicy::new(1.5).unwrap();
    let mut r = rng::stream(&[seed, 1]);
    let ep = play_game(&u, &sd, target, &gc, &mut r).unwrap();

    println!("symmetric-disconnection play for {target}:");
    print!("{}", game::tree_to_string(&ep.tree));
    println!(
        "\noutcome {:?}, total cost {}, branching factor {:?}",
        ep.outcome,
        ep.total_cost,
        game::branching_factor(&ep.tree)
    );

    // The engine's audit recomputes the cost from the tree alone.
    let audited = game::tree_cost(&ep.tree, &gc).unwrap();
    assert_eq!(audited, ep.total_cost);
    println!("audited tree cost equals the played cost ✓");

    // Every visited molecule node carries its realized subtree cost —
    // these (molecule, δ, cost) records feed the value store during
    // training.
    println!("\nfirst five realized visit costs (post-order):");
    for v in ep.visit_costs.iter().take(5) {
        println!("  {} at δ={} cost {}", v.molecule, v.depth_left, v.cost);
    }
    let root = ep.visit_costs.last().unwrap();
    assert_eq!(root.cost, ep.total_cost);

    // Same seed, same tree; different seed may differ (random tie-breaks
    // only matter for stochastic policies).
    let mut r2 = rng::stream(&[seed, 1]);
    let ep2 = play_game(&u, &sd, target, &gc, &mut r2).unwrap();
    assert_eq!(game::tree_to_string(&ep.tree), game::tree_to_string(&ep2.tree));
    println!("\nidentically seeded replay reproduces the tree ✓");

    let mut r3 = rng::stream(&[seed, 2]);
    let random_ep = play_game(&u, &RandomPolicy, target, &gc, &mut r3).unwrap();
    println!(
        "random policy on the same target: outcome {:?}, cost {}",
        random_ep.outcome, random_ep.total_cost
    );
}
