//! Exact planning on small universes: build the exhaustive reaction
//! network, solve it by depth-layered dynamic programming, and verify
//! every molecule's value against an independent brute-force recursion
//! over raw expansions.  Then pull an optimal synthesis tree out of the
//! DP table and check its audited cost equals the DP value exactly.
//!
//!     cargo run --example dp_vs_brute_force [seed]

use retroplan::dp::{
    bellman_residual, brute_force_optimal, extract_best_tree, min_cost_dp, DpChoice,
    ReactionNetwork,
};
use retroplan::game::{self, GameConfig};
use retroplan::universe::{Universe, UniverseParams};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let params = UniverseParams {
        molecule_count: 24,
        template_count: 8,
        alphabet_size: 3,
        max_len: 9,
        foundation_len: 2,
        buyable_fraction: 0.45,
        dead_end_fraction: 0.2,
        ..UniverseParams::default()
    };
    let u = Universe::generate(seed, params).unwrap();
    let gc = GameConfig::default();
    let d_max = gc.d_max;

    // Exhaustive network: every reaction reachable from every molecule.
    let roots: Vec<_> = u.pool().to_vec();
    let net = ReactionNetwork::exhaustive_from(&u, &roots, 20_000).unwrap();
    println!(
        "universe seed {seed}: {} molecules, exhaustive network has {} molecules / {} reactions",
        u.pool().len(),
        net.molecule_count(),
        net.reaction_count()
    );

    let dp = min_cost_dp(&net, &u, &gc).unwrap();

    println!("\n{:<12} {:>10} {:>12}  {}", "molecule", "dp value", "brute force", "choice at δ=d_max");
    for mol in u.pool() {
        let v_dp = dp.value_of(&net, mol, d_max).unwrap();
        let v_bf = brute_force_optimal(&u, mol, &gc).unwrap();
        assert_eq!(v_dp, v_bf, "DP and brute force disagree on {}", mol.canon());
        let id = net.id_of(mol).unwrap();
        let choice = match dp.choice_by_id(id, d_max) {
            DpChoice::Buy => "buy".to_string(),
            DpChoice::DeadEnd => "dead end".to_string(),
            DpChoice::DepthLimit => "depth limit".to_string(),
            DpChoice::Reaction(r) => format!("apply template {}", net.reaction(r).template_id),
        };
        println!("{:<12} {:>10} {:>12}  {}", mol.canon(), v_dp, v_bf, choice);
    }
    println!("\nall {} molecules agree exactly", u.pool().len());

    // Bellman residual of the DP table is exactly zero everywhere.
    let residual = bellman_residual(&dp, &net, &u);
    assert_eq!(residual, 0.0);
    println!("max Bellman residual over all (molecule, δ): {residual}");

    // Extract an optimal tree for the most expensive solvable molecule.
    let target = u
        .pool()
        .iter()
        .filter(|m| {
            let v = dp.value_of(&net, m, d_max).unwrap();
            v < gc.p2 && v >= gc.c_rxn_default
        })
        .max_by(|a, b| {
            dp.value_of(&net, a, d_max).unwrap().total_cmp(&dp.value_of(&net, b, d_max).unwrap())
        })
        .expect("no solvable non-buyable molecule in this universe; try another seed");
    let tree = extract_best_tree(&dp, &net, &u, target, &gc).unwrap();
    let v = dp.value_of(&net, target, d_max).unwrap();
    println!("\noptimal tree for {} (value {v}):", target.canon());
    print!("{}", game::tree_to_string(&tree));
    let audited = game::tree_cost(&tree, &gc).unwrap();
    assert_eq!(audited, v);
    println!("audited tree cost {audited} == DP value {v} ✓");
}
