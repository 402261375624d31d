//! A tour of the learned value function on its own, away from the game:
//! architecture profiles and parameter counts, the decaying learning-rate
//! schedule, bounded outputs, fitting a small corpus from the replay
//! buffer, analytic-vs-numeric gradient agreement, and byte-exact
//! serialization.
//!
//!     cargo run --example value_network_basics

use retroplan::universe::Molecule;
use retroplan::value::{NetworkConfig, TrainSample, ValueNetwork};

fn main() {
    // --- profiles -------------------------------------------------------
    let tiny = ValueNetwork::new(NetworkConfig::tiny(7)).unwrap();
    let desk = ValueNetwork::new(NetworkConfig::desk(7)).unwrap();
    println!("profile  fingerprint  hidden              params");
    println!(
        "tiny     {:>11}  {:<18} {:>10}",
        tiny.config().fingerprint_len,
        format!("{:?}", tiny.config().hidden),
        tiny.param_count()
    );
    println!(
        "desk     {:>11}  {:<18} {:>10}",
        desk.config().fingerprint_len,
        format!("{:?}", desk.config().hidden),
        desk.param_count()
    );
    let full = ValueNetwork::new(NetworkConfig::full(7)).unwrap();
    println!(
        "full     {:>11}  {:<18} {:>10}",
        full.config().fingerprint_len,
        format!("{:?}", full.config().hidden),
        full.param_count()
    );
    assert_eq!(full.param_count(), 17_450_789);
    drop(full);

    // --- learning-rate schedule ----------------------------------------
    println!("\nlearning rate lr0/(1 + 2√k):");
    for k in [0usize, 1, 4, 9, 100] {
        println!("  k={k:<4} lr={:.9}", tiny.learning_rate_at(k));
    }
    assert!((tiny.learning_rate_at(0) - 0.001).abs() < 1e-12);
    assert!((tiny.learning_rate_at(4) - 0.0002).abs() < 1e-12);

    // --- bounded outputs ------------------------------------------------
    let mols: Vec<Molecule> = ["a", "abba", "cabbage", "deadbeef", "feedface"]
        .iter()
        .map(|s| Molecule::new(*s))
        .collect();
    println!("\nfresh-network estimates (all values live in (0, 500)):");
    for m in &mols {
        for delta in [0usize, 5, 10] {
            let v = tiny.predict(m, delta);
            assert!((0.0..=500.0).contains(&v));
            print!("  v({}, δ={delta})={v:<8.2}", m.canon());
        }
        println!();
    }

    // --- fitting a corpus ----------------------------------------------
    // Target rule: cost grows with string length and shrinks with depth
    // budget, mimicking what played games produce.
    let mut net = ValueNetwork::new(NetworkConfig::tiny(7)).unwrap();
    let alphabet = ["ab", "ba", "abc", "cab", "bcab", "aabb", "cabba", "bacab"];
    let mut corpus = Vec::new();
    for (i, s) in alphabet.iter().enumerate() {
        for delta in 1..=10usize {
            let target = 10.0 + 12.0 * i as f64 + 3.0 * (10 - delta) as f64;
            corpus.push(TrainSample {
                molecule: Molecule::new(*s),
                depth_left: delta,
                target,
            });
        }
    }
    let probe_mae = |n: &ValueNetwork| {
        corpus.iter().map(|s| (n.predict(&s.molecule, s.depth_left) - s.target).abs()).sum::<f64>()
            / corpus.len() as f64
    };
    let before = probe_mae(&net);
    println!("\nfitting {} samples:", corpus.len());
    println!("  update  lr          train-MAE  inference-MAE");
    for _ in 0..12 {
        let report = net.fit(&corpus, 90).unwrap();
        println!(
            "  {:>6}  {:<10.7} {:>9.3} {:>14.3}",
            report.k_before, report.lr, report.train_mae, report.inference_mae
        );
    }
    let after = probe_mae(&net);
    println!("  corpus MAE {before:.2} → {after:.2}");
    assert!(after < 0.5 * before, "training failed to reduce error");

    // --- gradient check -------------------------------------------------
    let probes: Vec<TrainSample> = corpus.iter().step_by(13).cloned().collect();
    let dev = net.gradient_check(&probes, 1e-5).unwrap();
    println!("\ngradient check: max |numeric − analytic| deviation = {dev:.3e}");
    assert!(dev < 1e-4);

    // --- serialization --------------------------------------------------
    let bytes = net.to_bytes();
    let restored = ValueNetwork::from_bytes(&bytes).unwrap();
    for s in corpus.iter().step_by(7) {
        let a = net.predict(&s.molecule, s.depth_left);
        let b = restored.predict(&s.molecule, s.depth_left);
        assert_eq!(a.to_bits(), b.to_bits());
    }
    println!("serialized {} bytes; restored network predicts bit-identically ✓", bytes.len());
}
