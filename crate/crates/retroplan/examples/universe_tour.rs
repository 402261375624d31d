//! Tour of a seeded synthetic reaction universe: templates, buyable
//! substrates, reaction expansion, fingerprints, and diverse target
//! selection.
//!
//!     cargo run --example universe_tour [seed]

use retroplan::universe::{
    select_targets, tanimoto, Fingerprint, TargetParams, Universe, UniverseParams,
};

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let params = UniverseParams::default();
    let u = Universe::generate(seed, params).expect("default parameters always generate");

    println!("universe seed {seed}, digest {}", u.digest());
    println!(
        "{} molecules in the pool, {} templates, {} buyable substrates\n",
        u.pool().len(),
        u.templates().len(),
        u.buyable_map().len()
    );

    println!("first five templates (priority order is relevance-descending):");
    for t in u.templates().iter().take(5) {
        println!("  template {} matches `{}` — {:?} (relevance {:.3})", t.id, t.pattern, t.op, t.relevance_weight);
    }

    // Expand a few pool molecules to show the game's candidate sets.
    println!("\nreaction candidates for a few pool molecules:");
    let mut shown = 0;
    for m in u.pool() {
        if u.is_buyable(m) {
            continue;
        }
        let candidates = u.expand(m);
        if candidates.is_empty() {
            println!("  {m} — dead end (no template applies)");
        } else {
            let r = &candidates[0];
            let names: Vec<String> = r.reactants.iter().map(|q| q.to_string()).collect();
            println!(
                "  {m} — {} candidate(s); best-priority: template {} → {} (cost {})",
                candidates.len(),
                r.template_id,
                names.join(" + "),
                r.cost
            );
        }
        shown += 1;
        if shown == 5 {
            break;
        }
    }

    // Buyables are leaves of every synthesis tree.
    let b = u.pool().iter().find(|m| u.is_buyable(m)).expect("buyables exist");
    println!("\nbuyable example: {b} at price {}", u.substrate_price(b).unwrap());

    // Fingerprints drive both target clustering and the value network.
    let mols: Vec<_> = u.pool().iter().filter(|m| m.size() >= 6).take(3).collect();
    let fps: Vec<Fingerprint> = mols
        .iter()
        .map(|m| Fingerprint::compute(m, 1024, 3).expect("non-empty molecule"))
        .collect();
    println!("\npairwise Tanimoto similarities (1024-bit substring fingerprints, radius 3):");
    for i in 0..mols.len() {
        for j in i + 1..mols.len() {
            println!(
                "  T({}, {}) = {:.4}",
                mols[i],
                mols[j],
                tanimoto(&fps[i], &fps[j]).expect("fingerprints are non-empty")
            );
        }
    }

    // Diverse targets via threshold clustering over those fingerprints.
    let sel = select_targets(&u, &TargetParams::default(), seed).expect("selection succeeds");
    println!(
        "\nselected {} train and {} test targets by Taylor–Butina clustering; first five train targets:",
        sel.train.len(),
        sel.test.len()
    );
    for t in sel.train.iter().take(5) {
        println!("  {t} (len {})", t.size());
    }

    // The same seed regenerates the same universe, byte for byte.
    let again = Universe::generate(seed, UniverseParams::default()).unwrap();
    assert_eq!(u.serialize(), again.serialize());
    println!("\nregeneration from the same seed is byte-identical ✓");
}
