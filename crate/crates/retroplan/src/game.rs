//! The retrosynthesis game engine.
//!
//! A game decomposes a target molecule into a synthesis tree: molecule
//! nodes choose one reaction (or close as a leaf), reaction nodes require
//! *all* their reactants. Leaves are buyable substrates (cost `c_sub`),
//! depth-limit penalties (`P1`, only at residual depth 0) or dead ends
//! (`P2`, no applicable reactions). The total cost of an episode is the sum
//! of reaction costs plus the sum of leaf costs.

use std::fmt::Write as _;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::policy::ReactionPolicy;
use crate::universe::{Molecule, Reaction, Universe};

/// Game-level constants. `P2 > P1 > c_rxn_default >= 0` is required: losing
/// outright must dominate running out of depth, which must dominate one
/// more reaction step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GameConfig {
    /// Maximum search depth `d_max`; residual depth δ counts down from it.
    pub d_max: usize,
    /// Default per-reaction cost.
    pub c_rxn_default: f64,
    /// Default substrate price for buyables.
    pub c_sub_default: f64,
    /// Depth-limit penalty (non-buyable molecule at δ = 0).
    pub p1: f64,
    /// Dead-end penalty (no applicable reactions at δ >= 1).
    pub p2: f64,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig { d_max: 10, c_rxn_default: 1.0, c_sub_default: 0.0, p1: 10.0, p2: 100.0 }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_max < 1 {
            return Err(Error::InvalidParameter("d_max must be >= 1".into()));
        }
        let ordered = self.p2 > self.p1 && self.p1 > self.c_rxn_default && self.c_rxn_default >= 0.0;
        if !ordered {
            return Err(Error::InvalidParameter(format!(
                "penalty ordering violated: need P2 > P1 > c_rxn >= 0, got P2={} P1={} c_rxn={}",
                self.p2, self.p1, self.c_rxn_default
            )));
        }
        if !(self.c_sub_default.is_finite() && self.c_sub_default >= 0.0) {
            return Err(Error::InvalidParameter("c_sub_default must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// How a molecule node was closed or expanded.
#[derive(Clone, Debug, PartialEq)]
pub enum NodeExpansion {
    /// Purchased leaf; `cost` is the substrate price at play time.
    Buyable { cost: f64 },
    /// Out of depth (δ = 0, not buyable).
    DepthLimit,
    /// No applicable reactions (δ >= 1, not buyable).
    DeadEnd,
    /// Expanded by one chosen reaction.
    Reaction(Box<ReactionNode>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MoleculeNode {
    pub molecule: Molecule,
    /// Residual depth δ = d_max - depth of this node.
    pub depth_left: usize,
    pub expansion: NodeExpansion,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReactionNode {
    pub reaction: Reaction,
    /// One subtree per reactant, in reaction order.
    pub reactants: Vec<MoleculeNode>,
}

/// A complete synthesis tree rooted at the target with δ = d_max.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisTree {
    pub root: MoleculeNode,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// Every leaf is buyable.
    Win,
    /// No dead ends, but at least one depth-limit leaf.
    DepthLoss,
    /// At least one dead-end leaf (takes precedence over depth losses).
    DeadEndLoss,
}

impl Outcome {
    pub fn label(&self) -> &'static str {
        match self {
            Outcome::Win => "win",
            Outcome::DepthLoss => "depth-loss",
            Outcome::DeadEndLoss => "dead-end-loss",
        }
    }
}

/// Realized cost of one molecule visit, keyed by (canonical string, δ).
#[derive(Clone, Debug, PartialEq)]
pub struct VisitCost {
    pub molecule: Molecule,
    pub depth_left: usize,
    pub cost: f64,
}

/// One played game: the tree plus its derived statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub tree: SynthesisTree,
    pub total_cost: f64,
    pub outcome: Outcome,
    pub visit_costs: Vec<VisitCost>,
}

/// Plays one game from `target` under `policy`.
///
/// At every molecule node the buyable check comes first (also at δ = 0, so
/// a purchasable molecule at the depth limit still closes as a buyable
/// leaf); then the depth check; then the dead-end check; otherwise the
/// policy picks one reaction and play recurses at δ - 1.
pub fn play_game(
    u: &Universe,
    policy: &dyn ReactionPolicy,
    target: &Molecule,
    cfg: &GameConfig,
    rng: &mut dyn RngCore,
) -> Result<EpisodeRecord> {
    cfg.validate()?;
    if !u.contains(target) {
        return Err(Error::InvalidInput(format!("target `{target}` is not in the universe")));
    }
    let root = expand_node(u, policy, target, cfg.d_max, cfg, rng);
    let tree = SynthesisTree { root };
    let total_cost = tree_cost(&tree, cfg)?;
    let outcome = classify_outcome(&tree);
    let visit_costs = collect_visit_costs(&tree, cfg)?;
    Ok(EpisodeRecord { tree, total_cost, outcome, visit_costs })
}

fn expand_node(
    u: &Universe,
    policy: &dyn ReactionPolicy,
    m: &Molecule,
    depth_left: usize,
    cfg: &GameConfig,
    rng: &mut dyn RngCore,
) -> MoleculeNode {
    if let Some(price) = u.substrate_price(m) {
        return MoleculeNode { molecule: m.clone(), depth_left, expansion: NodeExpansion::Buyable { cost: price } };
    }
    if depth_left == 0 {
        return MoleculeNode { molecule: m.clone(), depth_left, expansion: NodeExpansion::DepthLimit };
    }
    let candidates = u.expand(m);
    if candidates.is_empty() {
        return MoleculeNode { molecule: m.clone(), depth_left, expansion: NodeExpansion::DeadEnd };
    }
    let idx = policy.select(m, depth_left, &candidates, rng);
    let reaction = candidates.into_iter().nth(idx).expect("policy returned an index in range");
    let reactants = reaction
        .reactants
        .iter()
        .map(|q| expand_node(u, policy, q, depth_left - 1, cfg, rng))
        .collect();
    MoleculeNode {
        molecule: m.clone(),
        depth_left,
        expansion: NodeExpansion::Reaction(Box::new(ReactionNode { reaction, reactants })),
    }
}

/// Total cost: Σ reaction costs + Σ leaf costs (price, P1 or P2).
/// Validates the tree structure first; hand-built trees that break the
/// alternation, depth or leaf rules yield a malformed-tree error.
pub fn tree_cost(tree: &SynthesisTree, cfg: &GameConfig) -> Result<f64> {
    cfg.validate()?;
    validate_node(&tree.root, cfg.d_max, true)?;
    Ok(node_cost(&tree.root, cfg))
}

fn validate_node(node: &MoleculeNode, expected_depth: usize, is_root: bool) -> Result<()> {
    if node.depth_left != expected_depth {
        return Err(Error::MalformedTree(format!(
            "node `{}` has depth_left {} but {} was expected{}",
            node.molecule,
            node.depth_left,
            expected_depth,
            if is_root { " (root must sit at d_max)" } else { "" }
        )));
    }
    match &node.expansion {
        NodeExpansion::Buyable { cost } => {
            if !cost.is_finite() || *cost < 0.0 {
                return Err(Error::MalformedTree(format!("buyable leaf `{}` has invalid cost", node.molecule)));
            }
        }
        NodeExpansion::DepthLimit => {
            if node.depth_left != 0 {
                return Err(Error::MalformedTree(format!(
                    "depth-limit leaf `{}` sits at δ={} (must be 0)",
                    node.molecule, node.depth_left
                )));
            }
        }
        NodeExpansion::DeadEnd => {
            if node.depth_left == 0 {
                return Err(Error::MalformedTree(format!(
                    "dead-end leaf `{}` sits at δ=0 (depth limit applies there)",
                    node.molecule
                )));
            }
        }
        NodeExpansion::Reaction(rx) => {
            if node.depth_left == 0 {
                return Err(Error::MalformedTree(format!(
                    "molecule `{}` expanded at δ=0",
                    node.molecule
                )));
            }
            if rx.reaction.product != node.molecule {
                return Err(Error::MalformedTree(format!(
                    "reaction under `{}` produces `{}`",
                    node.molecule, rx.reaction.product
                )));
            }
            if !(1..=3).contains(&rx.reaction.reactants.len())
                || rx.reaction.reactants.len() != rx.reactants.len()
            {
                return Err(Error::MalformedTree(format!(
                    "reaction under `{}` has mismatched reactants",
                    node.molecule
                )));
            }
            if !rx.reaction.cost.is_finite() || rx.reaction.cost < 0.0 {
                return Err(Error::MalformedTree(format!(
                    "reaction under `{}` has invalid cost",
                    node.molecule
                )));
            }
            for (expected, child) in rx.reaction.reactants.iter().zip(&rx.reactants) {
                if &child.molecule != expected {
                    return Err(Error::MalformedTree(format!(
                        "child `{}` does not match reactant `{}`",
                        child.molecule, expected
                    )));
                }
                validate_node(child, node.depth_left - 1, false)?;
            }
        }
    }
    Ok(())
}

fn node_cost(node: &MoleculeNode, cfg: &GameConfig) -> f64 {
    match &node.expansion {
        NodeExpansion::Buyable { cost } => *cost,
        NodeExpansion::DepthLimit => cfg.p1,
        NodeExpansion::DeadEnd => cfg.p2,
        NodeExpansion::Reaction(rx) => {
            rx.reaction.cost + rx.reactants.iter().map(|c| node_cost(c, cfg)).sum::<f64>()
        }
    }
}

/// Mean reactant count per reaction node; `None` for trees with no
/// reactions (a target bought or lost outright).
pub fn branching_factor(tree: &SynthesisTree) -> Option<f64> {
    fn walk(node: &MoleculeNode, reactions: &mut usize, reactants: &mut usize) {
        if let NodeExpansion::Reaction(rx) = &node.expansion {
            *reactions += 1;
            *reactants += rx.reactants.len();
            for c in &rx.reactants {
                walk(c, reactions, reactants);
            }
        }
    }
    let (mut reactions, mut reactants) = (0usize, 0usize);
    walk(&tree.root, &mut reactions, &mut reactants);
    (reactions > 0).then(|| reactants as f64 / reactions as f64)
}

/// Win iff every leaf is buyable; any dead-end leaf dominates depth losses.
pub fn classify_outcome(tree: &SynthesisTree) -> Outcome {
    fn walk(node: &MoleculeNode, saw_depth: &mut bool, saw_dead: &mut bool) {
        match &node.expansion {
            NodeExpansion::Buyable { .. } => {}
            NodeExpansion::DepthLimit => *saw_depth = true,
            NodeExpansion::DeadEnd => *saw_dead = true,
            NodeExpansion::Reaction(rx) => {
                for c in &rx.reactants {
                    walk(c, saw_depth, saw_dead);
                }
            }
        }
    }
    let (mut saw_depth, mut saw_dead) = (false, false);
    walk(&tree.root, &mut saw_depth, &mut saw_dead);
    if saw_dead {
        Outcome::DeadEndLoss
    } else if saw_depth {
        Outcome::DepthLoss
    } else {
        Outcome::Win
    }
}

/// Realized subtree cost for every molecule node, post-order, keyed by
/// (canonical string, δ). Repeated molecules inside one tree contribute one
/// entry per visit; the root entry (last) equals the total cost.
pub fn collect_visit_costs(tree: &SynthesisTree, cfg: &GameConfig) -> Result<Vec<VisitCost>> {
    cfg.validate()?;
    fn walk(node: &MoleculeNode, cfg: &GameConfig, out: &mut Vec<VisitCost>) -> f64 {
        let cost = match &node.expansion {
            NodeExpansion::Buyable { cost } => *cost,
            NodeExpansion::DepthLimit => cfg.p1,
            NodeExpansion::DeadEnd => cfg.p2,
            NodeExpansion::Reaction(rx) => {
                rx.reaction.cost
                    + rx.reactants.iter().map(|c| walk(c, cfg, out)).sum::<f64>()
            }
        };
        out.push(VisitCost { molecule: node.molecule.clone(), depth_left: node.depth_left, cost });
        cost
    }
    let mut out = Vec::new();
    walk(&tree.root, cfg, &mut out);
    Ok(out)
}

/// Nested indented text form: one `m` line per molecule node (with a leaf
/// tag where closed), one `r` line per chosen reaction.
pub fn tree_to_string(tree: &SynthesisTree) -> String {
    fn write_node(node: &MoleculeNode, level: usize, out: &mut String) {
        let pad = "  ".repeat(level);
        match &node.expansion {
            NodeExpansion::Buyable { cost } => {
                let _ = writeln!(out, "{pad}m {} d={} buyable c={}", node.molecule, node.depth_left, cost);
            }
            NodeExpansion::DepthLimit => {
                let _ = writeln!(out, "{pad}m {} d={} depth-limit", node.molecule, node.depth_left);
            }
            NodeExpansion::DeadEnd => {
                let _ = writeln!(out, "{pad}m {} d={} dead-end", node.molecule, node.depth_left);
            }
            NodeExpansion::Reaction(rx) => {
                let _ = writeln!(out, "{pad}m {} d={}", node.molecule, node.depth_left);
                let _ = writeln!(out, "{pad}  r t={} c={}", rx.reaction.template_id, rx.reaction.cost);
                for c in &rx.reactants {
                    write_node(c, level + 2, out);
                }
            }
        }
    }
    let mut out = String::new();
    write_node(&tree.root, 0, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::RandomPolicy;
    use crate::rng;
    use crate::universe::{ReactionTemplate, RewriteOp, UniverseParams};

    /// Universe with a single forced chain: "abbb" → "abb" → "ab" → "a",
    /// with "a" buyable. Exactly one reaction per non-terminal molecule.
    fn chain_universe() -> Universe {
        let params = UniverseParams {
            alphabet_size: 2,
            max_len: 8,
            ..UniverseParams::default()
        };
        let t = ReactionTemplate::new(0, "ab", RewriteOp::Replace { replacement: "a".into() }, 0.9).unwrap();
        Universe::from_components(
            0,
            params,
            vec![t],
            vec![(Molecule::new("a"), 0.0)],
            vec![Molecule::new("abbb")],
        )
        .unwrap()
    }

    /// Universe where "ab" splits into buyables "a" and "b" in one step.
    fn split_universe() -> Universe {
        let params = UniverseParams { alphabet_size: 2, max_len: 8, ..UniverseParams::default() };
        let t = ReactionTemplate::new(
            0,
            "ab",
            RewriteOp::Split { left_cap: "a".into(), right_cap: "b".into() },
            0.9,
        )
        .unwrap();
        Universe::from_components(
            0,
            params,
            vec![t],
            vec![(Molecule::new("a"), 0.0), (Molecule::new("b"), 0.0)],
            vec![Molecule::new("ab")],
        )
        .unwrap()
    }

    fn play(u: &Universe, target: &str, cfg: &GameConfig) -> EpisodeRecord {
        let mut rng = rng::stream(&[1]);
        play_game(u, &RandomPolicy, &Molecule::new(target), cfg, &mut rng).unwrap()
    }

    #[test]
    fn buyable_target_is_a_single_leaf_win() {
        let u = chain_universe();
        let ep = play(&u, "a", &GameConfig::default());
        assert_eq!(ep.total_cost, 0.0);
        assert_eq!(ep.outcome, Outcome::Win);
        assert!(matches!(ep.tree.root.expansion, NodeExpansion::Buyable { .. }));
        assert_eq!(branching_factor(&ep.tree), None);
    }

    #[test]
    fn forced_chain_costs_three() {
        let ep = play(&chain_universe(), "abbb", &GameConfig::default());
        assert_eq!(ep.total_cost, 3.0);
        assert_eq!(ep.outcome, Outcome::Win);
    }

    #[test]
    fn one_split_to_two_buyables_costs_one() {
        let ep = play(&split_universe(), "ab", &GameConfig::default());
        assert_eq!(ep.total_cost, 1.0);
        assert_eq!(ep.outcome, Outcome::Win);
        assert_eq!(branching_factor(&ep.tree), Some(2.0));
    }

    #[test]
    fn dead_end_target_scores_p2() {
        let u = chain_universe();
        let ep = play(&u, "bbb", &GameConfig::default());
        assert_eq!(ep.total_cost, 100.0);
        assert_eq!(ep.outcome, Outcome::DeadEndLoss);
    }

    #[test]
    fn depth_exhaustion_scores_p1_and_buyable_wins_at_depth_zero() {
        let u = chain_universe();
        // d_max = 2: abbb → abb → ab, then δ=0 on a non-buyable molecule.
        let cfg2 = GameConfig { d_max: 2, ..GameConfig::default() };
        let ep = play(&u, "abbb", &cfg2);
        assert_eq!(ep.total_cost, 2.0 + 10.0);
        assert_eq!(ep.outcome, Outcome::DepthLoss);
        // d_max = 3: the chain bottoms out exactly at δ=0 on buyable "a",
        // and the buyable check precedes the depth check.
        let cfg3 = GameConfig { d_max: 3, ..GameConfig::default() };
        let ep = play(&u, "abbb", &cfg3);
        assert_eq!(ep.total_cost, 3.0);
        assert_eq!(ep.outcome, Outcome::Win);
    }

    fn buy(m: &str, d: usize) -> MoleculeNode {
        MoleculeNode { molecule: Molecule::new(m), depth_left: d, expansion: NodeExpansion::Buyable { cost: 0.0 } }
    }

    fn rxn(product: &str, d: usize, children: Vec<MoleculeNode>) -> MoleculeNode {
        let reaction = Reaction {
            product: Molecule::new(product),
            reactants: children.iter().map(|c| c.molecule.clone()).collect(),
            template_id: 0,
            cost: 1.0,
        };
        MoleculeNode {
            molecule: Molecule::new(product),
            depth_left: d,
            expansion: NodeExpansion::Reaction(Box::new(ReactionNode { reaction, reactants: children })),
        }
    }

    /// Five reactions, all leaves buyable: the canonical hand-counted case.
    fn five_reaction_tree() -> SynthesisTree {
        let m4 = rxn("bb", 7, vec![buy("b", 6)]);
        let m3 = rxn("abb", 8, vec![buy("a", 7), m4]);
        let m2 = rxn("aabb", 9, vec![m3]);
        let m1 = rxn("ab", 9, vec![buy("a", 8), buy("b", 8)]);
        let root = rxn("abaabb", 10, vec![m1, m2]);
        SynthesisTree { root }
    }

    #[test]
    fn hand_counted_costs_match_the_accounting_identity() {
        let cfg = GameConfig::default();
        let five = five_reaction_tree();
        assert_eq!(tree_cost(&five, &cfg).unwrap(), 5.0);
        assert_eq!(classify_outcome(&five), Outcome::Win);

        // One reaction into a dead end: 1 + 100.
        let dead = SynthesisTree {
            root: rxn(
                "aab",
                10,
                vec![MoleculeNode {
                    molecule: Molecule::new("aa"),
                    depth_left: 9,
                    expansion: NodeExpansion::DeadEnd,
                }],
            ),
        };
        assert_eq!(tree_cost(&dead, &cfg).unwrap(), 101.0);
        assert_eq!(classify_outcome(&dead), Outcome::DeadEndLoss);

        // A 10-reaction chain ending at the depth limit: 10 + 10.
        let mut node = MoleculeNode {
            molecule: Molecule::new("a"),
            depth_left: 0,
            expansion: NodeExpansion::DepthLimit,
        };
        for d in 1..=10 {
            node = rxn("a", d, vec![node]);
        }
        let chain = SynthesisTree { root: node };
        assert_eq!(tree_cost(&chain, &cfg).unwrap(), 20.0);
        assert_eq!(classify_outcome(&chain), Outcome::DepthLoss);
    }

    #[test]
    fn branching_factor_hand_values() {
        let three = SynthesisTree { root: rxn("abc", 10, vec![buy("a", 9), buy("b", 9), buy("c", 9)]) };
        assert_eq!(branching_factor(&three), Some(3.0));
        let five = five_reaction_tree();
        // Reactant edges per reaction: 2 + 2 + 1 + 2 + 1 = 8 over 5 reactions.
        assert_eq!(branching_factor(&five), Some(8.0 / 5.0));
    }

    #[test]
    fn visit_costs_cover_every_node_and_root_equals_total() {
        let cfg = GameConfig::default();
        let five = five_reaction_tree();
        let visits = collect_visit_costs(&five, &cfg).unwrap();
        assert_eq!(visits.len(), 9); // 5 expanded molecules + 4 buyable leaves
        let root = visits.last().unwrap();
        assert_eq!(root.molecule, Molecule::new("abaabb"));
        assert_eq!(root.depth_left, 10);
        assert_eq!(root.cost, 5.0);
        // Buyable leaves contribute their own price as the visit cost.
        assert!(visits
            .iter()
            .filter(|v| v.molecule == Molecule::new("b"))
            .all(|v| v.cost == 0.0));
    }

    #[test]
    fn malformed_trees_are_rejected() {
        let cfg = GameConfig::default();
        // Root not at d_max.
        let t = SynthesisTree { root: buy("a", 3) };
        assert!(matches!(tree_cost(&t, &cfg), Err(Error::MalformedTree(_))));
        // Depth-limit leaf above δ=0.
        let t = SynthesisTree {
            root: MoleculeNode {
                molecule: Molecule::new("a"),
                depth_left: 10,
                expansion: NodeExpansion::DepthLimit,
            },
        };
        assert!(matches!(tree_cost(&t, &cfg), Err(Error::MalformedTree(_))));
        // Child molecule that does not match the reaction's reactant.
        let mut bad = rxn("ab", 10, vec![buy("a", 9)]);
        if let NodeExpansion::Reaction(rx) = &mut bad.expansion {
            rx.reactants[0].molecule = Molecule::new("zz");
        }
        let t = SynthesisTree { root: bad };
        assert!(matches!(tree_cost(&t, &cfg), Err(Error::MalformedTree(_))));
    }

    #[test]
    fn config_validation_enforces_penalty_ordering() {
        let bad = GameConfig { p1: 200.0, ..GameConfig::default() };
        assert!(bad.validate().is_err());
        let bad = GameConfig { d_max: 0, ..GameConfig::default() };
        assert!(bad.validate().is_err());
        assert!(GameConfig::default().validate().is_ok());
    }

    #[test]
    fn identically_seeded_plays_are_identical() {
        let p = UniverseParams {
            molecule_count: 80,
            template_count: 10,
            alphabet_size: 5,
            max_len: 20,
            ..UniverseParams::default()
        };
        let u = Universe::generate(99, p).unwrap();
        let target = u
            .pool()
            .iter()
            .find(|m| !u.is_buyable(m) && !u.expand(m).is_empty())
            .unwrap()
            .clone();
        let cfg = GameConfig::default();
        let mut r1 = rng::stream(&[42]);
        let mut r2 = rng::stream(&[42]);
        let a = play_game(&u, &RandomPolicy, &target, &cfg, &mut r1).unwrap();
        let b = play_game(&u, &RandomPolicy, &target, &cfg, &mut r2).unwrap();
        assert_eq!(tree_to_string(&a.tree), tree_to_string(&b.tree));
        assert_eq!(a.total_cost, b.total_cost);
        // Cost identity: total = Σ reaction costs + Σ leaf costs; the root
        // visit cost carries the same number.
        assert_eq!(a.visit_costs.last().unwrap().cost, a.total_cost);
    }

    #[test]
    fn target_outside_universe_is_an_input_error() {
        let u = chain_universe();
        let mut rng = rng::stream(&[1]);
        let err = play_game(&u, &RandomPolicy, &Molecule::new("xyz"), &GameConfig::default(), &mut rng);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
    }
}
