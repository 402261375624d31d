//! Cumulative AND/OR reaction network and exact dynamic-programming
//! extraction of minimum synthesis costs, plus the brute-force oracle used
//! to validate the DP.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::game::{GameConfig, MoleculeNode, NodeExpansion, ReactionNode, SynthesisTree};
use crate::universe::{Molecule, Reaction, Universe};

/// One reaction node of the network, interned over molecule ids. The
/// reactant list keeps the order in which the reaction was first seen;
/// deduplication uses the sorted multiset.
#[derive(Clone, Debug)]
pub struct NetReaction {
    pub product: u32,
    pub template_id: u32,
    pub cost: f64,
    pub reactants: Vec<u32>,
}

/// Cumulative AND/OR graph of every molecule and reaction encountered.
/// Molecules are keyed by canonical string; reactions by (product,
/// template, reactant multiset), so repeated episodes merge exactly.
#[derive(Clone, Debug, Default)]
pub struct ReactionNetwork {
    mol_ids: HashMap<Molecule, u32>,
    mols: Vec<Molecule>,
    rxn_keys: HashMap<(u32, u32, Vec<u32>), u32>,
    rxns: Vec<NetReaction>,
    /// Known reactions per molecule, in first-seen order.
    out_edges: Vec<Vec<u32>>,
}

impl ReactionNetwork {
    pub fn new() -> Self {
        ReactionNetwork::default()
    }

    pub fn molecule_count(&self) -> usize {
        self.mols.len()
    }

    pub fn reaction_count(&self) -> usize {
        self.rxns.len()
    }

    pub fn molecule(&self, id: u32) -> &Molecule {
        &self.mols[id as usize]
    }

    pub fn molecules(&self) -> &[Molecule] {
        &self.mols
    }

    pub fn id_of(&self, m: &Molecule) -> Option<u32> {
        self.mol_ids.get(m).copied()
    }

    pub fn reactions_of(&self, id: u32) -> &[u32] {
        &self.out_edges[id as usize]
    }

    pub fn reaction(&self, rid: u32) -> &NetReaction {
        &self.rxns[rid as usize]
    }

    fn intern(&mut self, m: &Molecule) -> u32 {
        if let Some(&id) = self.mol_ids.get(m) {
            return id;
        }
        let id = self.mols.len() as u32;
        self.mol_ids.insert(m.clone(), id);
        self.mols.push(m.clone());
        self.out_edges.push(Vec::new());
        id
    }

    /// Inserts one reaction (product, reactants, template, cost); repeated
    /// insertions of the same reaction are no-ops.
    pub fn add_reaction(&mut self, r: &Reaction) {
        let product = self.intern(&r.product);
        let reactants: Vec<u32> = r.reactants.iter().map(|q| self.intern(q)).collect();
        let mut sorted = reactants.clone();
        sorted.sort_unstable();
        let key = (product, r.template_id, sorted);
        if self.rxn_keys.contains_key(&key) {
            return;
        }
        let rid = self.rxns.len() as u32;
        self.rxn_keys.insert(key, rid);
        self.rxns.push(NetReaction { product, template_id: r.template_id, cost: r.cost, reactants });
        self.out_edges[product as usize].push(rid);
    }

    /// Folds a played synthesis tree into the network: every molecule node
    /// is added, every chosen reaction becomes (or merges with) a reaction
    /// node.
    pub fn accumulate(&mut self, tree: &SynthesisTree) {
        fn walk(net: &mut ReactionNetwork, node: &MoleculeNode) {
            net.intern(&node.molecule);
            if let NodeExpansion::Reaction(rx) = &node.expansion {
                net.add_reaction(&rx.reaction);
                for c in &rx.reactants {
                    walk(net, c);
                }
            }
        }
        walk(self, &tree.root);
    }

    /// Builds the full expansion closure reachable from `roots`: every
    /// non-buyable molecule gets its complete candidate list, breadth
    /// first, until no new molecules appear. Buyable molecules are leaves
    /// (the game never expands them, and their value is their price
    /// regardless). Aborts with a capacity error beyond `max_molecules`.
    pub fn exhaustive_from(u: &Universe, roots: &[Molecule], max_molecules: usize) -> Result<Self> {
        let mut net = ReactionNetwork::new();
        let mut queue: Vec<u32> = Vec::new();
        for m in roots {
            let before = net.mols.len();
            let id = net.intern(m);
            if net.mols.len() > before {
                queue.push(id);
            }
        }
        let mut head = 0usize;
        while head < queue.len() {
            let id = queue[head];
            head += 1;
            let m = net.mols[id as usize].clone();
            if u.is_buyable(&m) {
                continue;
            }
            for r in u.expand(&m) {
                let before = net.mols.len();
                net.add_reaction(&r);
                for nid in before..net.mols.len() {
                    queue.push(nid as u32);
                }
                if net.mols.len() > max_molecules {
                    return Err(Error::Capacity(format!(
                        "expansion closure exceeded {max_molecules} molecules"
                    )));
                }
            }
        }
        Ok(net)
    }

    /// Line-oriented network file: header, molecule lines in id order,
    /// reaction lines keyed by canonical strings.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "retroplan-network v1 molecules={} reactions={}",
            self.mols.len(),
            self.rxns.len()
        );
        for m in &self.mols {
            let _ = writeln!(out, "m {m}");
        }
        for r in &self.rxns {
            let _ = write!(out, "r {} {} {}", self.mols[r.product as usize], r.template_id, r.cost);
            for &q in &r.reactants {
                let _ = write!(out, " {}", self.mols[q as usize]);
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Format("empty network file".into()))?;
        if !header.starts_with("retroplan-network v1 ") {
            return Err(Error::Format(format!("unrecognized network header `{header}`")));
        }
        let mut net = ReactionNetwork::new();
        for (no, line) in lines.enumerate() {
            let lineno = no + 2;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("m") => {
                    let canon = parts
                        .next()
                        .ok_or_else(|| Error::Format(format!("molecule line {lineno} missing key")))?;
                    net.intern(&Molecule::new(canon));
                }
                Some("r") => {
                    let product = parts
                        .next()
                        .ok_or_else(|| Error::Format(format!("reaction line {lineno} missing product")))?;
                    let tid: u32 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Format(format!("reaction line {lineno} bad template id")))?;
                    let cost: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Format(format!("reaction line {lineno} bad cost")))?;
                    let reactants: Vec<Molecule> = parts.map(Molecule::new).collect();
                    if reactants.is_empty() || reactants.len() > 3 {
                        return Err(Error::Format(format!("reaction line {lineno} needs 1..=3 reactants")));
                    }
                    net.add_reaction(&Reaction {
                        product: Molecule::new(product),
                        reactants,
                        template_id: tid,
                        cost,
                    });
                }
                Some(other) => {
                    return Err(Error::Format(format!("unknown record `{other}` on line {lineno}")));
                }
                None => {}
            }
        }
        Ok(net)
    }
}

/// Terminal tag or chosen reaction per (molecule, δ).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DpChoice {
    Buy,
    DepthLimit,
    DeadEnd,
    Reaction(u32),
}

/// Layered minimum-cost table over a reaction network: `values[δ][id]`.
#[derive(Clone, Debug)]
pub struct DpResult {
    pub d_max: usize,
    values: Vec<Vec<f64>>,
    choices: Vec<Vec<DpChoice>>,
}

impl DpResult {
    pub fn value_by_id(&self, id: u32, depth_left: usize) -> f64 {
        self.values[depth_left][id as usize]
    }

    pub fn choice_by_id(&self, id: u32, depth_left: usize) -> DpChoice {
        self.choices[depth_left][id as usize]
    }

    pub fn value_of(&self, net: &ReactionNetwork, m: &Molecule, depth_left: usize) -> Option<f64> {
        net.id_of(m).map(|id| self.value_by_id(id, depth_left))
    }

    /// CSV export: one record per (molecule, δ) in id-major order.
    pub fn to_csv(&self, net: &ReactionNetwork) -> String {
        let mut out = String::from("molecule,delta,value,choice\n");
        for id in 0..net.molecule_count() as u32 {
            for d in 0..=self.d_max {
                let choice = match self.choice_by_id(id, d) {
                    DpChoice::Buy => "buy".to_string(),
                    DpChoice::DepthLimit => "depth-limit".to_string(),
                    DpChoice::DeadEnd => "dead-end".to_string(),
                    DpChoice::Reaction(rid) => {
                        let r = net.reaction(rid);
                        let names: Vec<String> =
                            r.reactants.iter().map(|&q| net.molecule(q).to_string()).collect();
                        format!("r:{}:{}", r.template_id, names.join("+"))
                    }
                };
                let _ = writeln!(out, "{},{},{},{}", net.molecule(id), d, self.value_by_id(id, d), choice);
            }
        }
        out
    }
}

/// Lexicographic order on reaction keys (template id, sorted reactant
/// canonical strings); used to break exact value ties deterministically.
fn cmp_reaction_keys(net: &ReactionNetwork, a: u32, b: u32) -> Ordering {
    let (ra, rb) = (net.reaction(a), net.reaction(b));
    ra.template_id.cmp(&rb.template_id).then_with(|| {
        let mut ka: Vec<&str> = ra.reactants.iter().map(|&q| net.molecule(q).canon()).collect();
        let mut kb: Vec<&str> = rb.reactants.iter().map(|&q| net.molecule(q).canon()).collect();
        ka.sort_unstable();
        kb.sort_unstable();
        ka.cmp(&kb)
    })
}

/// Exact minimum cost per (molecule, δ) over the network's known
/// reactions, layered from δ = 0 upward: buyable → price at every δ;
/// δ = 0 → P1; no known reactions → P2; otherwise the cheapest known
/// reaction plus its reactant values one layer down. Exact value ties pick
/// the lexicographically least reaction key.
pub fn min_cost_dp(net: &ReactionNetwork, u: &Universe, cfg: &GameConfig) -> Result<DpResult> {
    cfg.validate()?;
    let n = net.molecule_count();
    let mut values: Vec<Vec<f64>> = Vec::with_capacity(cfg.d_max + 1);
    let mut choices: Vec<Vec<DpChoice>> = Vec::with_capacity(cfg.d_max + 1);

    let prices: Vec<Option<f64>> = net.molecules().iter().map(|m| u.substrate_price(m)).collect();

    let mut v0 = vec![0.0f64; n];
    let mut c0 = vec![DpChoice::DepthLimit; n];
    for id in 0..n {
        match prices[id] {
            Some(p) => {
                v0[id] = p;
                c0[id] = DpChoice::Buy;
            }
            None => v0[id] = cfg.p1,
        }
    }
    values.push(v0);
    choices.push(c0);

    for d in 1..=cfg.d_max {
        let prev = &values[d - 1];
        let mut v = vec![0.0f64; n];
        let mut c = vec![DpChoice::DeadEnd; n];
        for id in 0..n {
            if let Some(p) = prices[id] {
                v[id] = p;
                c[id] = DpChoice::Buy;
                continue;
            }
            let edges = net.reactions_of(id as u32);
            if edges.is_empty() {
                v[id] = cfg.p2;
                continue;
            }
            let mut best = f64::INFINITY;
            let mut best_rid = edges[0];
            for &rid in edges {
                let r = net.reaction(rid);
                let mut val = r.cost;
                for &q in &r.reactants {
                    val += prev[q as usize];
                }
                if val < best
                    || (val == best && cmp_reaction_keys(net, rid, best_rid) == Ordering::Less)
                {
                    best = val;
                    best_rid = rid;
                }
            }
            v[id] = best;
            c[id] = DpChoice::Reaction(best_rid);
        }
        values.push(v);
        choices.push(c);
    }
    Ok(DpResult { d_max: cfg.d_max, values, choices })
}

/// Re-evaluates the Bellman right-hand side at every non-terminal
/// (molecule, δ ≥ 1) and returns the maximum absolute residual. The DP
/// fills the table with exactly these expressions, so the residual is
/// exactly zero.
pub fn bellman_residual(dp: &DpResult, net: &ReactionNetwork, u: &Universe) -> f64 {
    let mut max_res: f64 = 0.0;
    for d in 1..=dp.d_max {
        for id in 0..net.molecule_count() as u32 {
            if u.is_buyable(net.molecule(id)) || net.reactions_of(id).is_empty() {
                continue;
            }
            let mut best = f64::INFINITY;
            for &rid in net.reactions_of(id) {
                let r = net.reaction(rid);
                let mut val = r.cost;
                for &q in &r.reactants {
                    val += dp.value_by_id(q, d - 1);
                }
                if val < best {
                    best = val;
                }
            }
            let res = (dp.value_by_id(id, d) - best).abs();
            if res > max_res {
                max_res = res;
            }
        }
    }
    max_res
}

/// More residual depth never hurts a molecule that already wins outright:
/// whenever v(m, δ) < P1, the optimal tree at δ has only buyable leaves
/// and remains valid at any deeper budget, so v(m, δ′) ≤ v(m, δ) for all
/// δ′ ≥ δ. (Global monotonicity over all values is false: a dead-ended
/// molecule scores P1 at δ = 0 but P2 > P1 at δ ≥ 1.) Returns the worst
/// violation, 0.0 when the property holds.
pub fn win_region_monotonicity_violation(dp: &DpResult, net: &ReactionNetwork, cfg: &GameConfig) -> f64 {
    let mut worst: f64 = 0.0;
    for id in 0..net.molecule_count() as u32 {
        for d in 0..=dp.d_max {
            let v = dp.value_by_id(id, d);
            if v < cfg.p1 {
                for d2 in d + 1..=dp.d_max {
                    let diff = dp.value_by_id(id, d2) - v;
                    if diff > worst {
                        worst = diff;
                    }
                }
            }
        }
    }
    worst
}

/// Reconstructs the optimal synthesis tree for `target` at δ = d_max by
/// following choice pointers; its engine-audited cost equals the DP value
/// exactly.
pub fn extract_best_tree(
    dp: &DpResult,
    net: &ReactionNetwork,
    u: &Universe,
    target: &Molecule,
    cfg: &GameConfig,
) -> Result<SynthesisTree> {
    let id = net
        .id_of(target)
        .ok_or_else(|| Error::Lookup(format!("target `{target}` is not in the reaction network")))?;
    fn build(dp: &DpResult, net: &ReactionNetwork, u: &Universe, id: u32, d: usize) -> MoleculeNode {
        let m = net.molecule(id).clone();
        match dp.choice_by_id(id, d) {
            DpChoice::Buy => MoleculeNode {
                molecule: m.clone(),
                depth_left: d,
                expansion: NodeExpansion::Buyable {
                    cost: u.substrate_price(&m).expect("Buy choice implies a price"),
                },
            },
            DpChoice::DepthLimit => {
                MoleculeNode { molecule: m, depth_left: d, expansion: NodeExpansion::DepthLimit }
            }
            DpChoice::DeadEnd => {
                MoleculeNode { molecule: m, depth_left: d, expansion: NodeExpansion::DeadEnd }
            }
            DpChoice::Reaction(rid) => {
                let r = net.reaction(rid);
                let reaction = Reaction {
                    product: m.clone(),
                    reactants: r.reactants.iter().map(|&q| net.molecule(q).clone()).collect(),
                    template_id: r.template_id,
                    cost: r.cost,
                };
                let children =
                    r.reactants.iter().map(|&q| build(dp, net, u, q, d - 1)).collect();
                MoleculeNode {
                    molecule: m,
                    depth_left: d,
                    expansion: NodeExpansion::Reaction(Box::new(ReactionNode {
                        reaction,
                        reactants: children,
                    })),
                }
            }
        }
    }
    Ok(SynthesisTree { root: build(dp, net, u, id, cfg.d_max) })
}

/// Independent oracle: exact v*(target, d_max) over the FULL universe by
/// depth-indexed recursion over `expand`, memoized on (molecule, δ).
/// Refuses once the visited state count passes `max_states`.
pub fn brute_force_optimal_guarded(
    u: &Universe,
    target: &Molecule,
    cfg: &GameConfig,
    max_states: usize,
) -> Result<f64> {
    cfg.validate()?;
    let mut memo: HashMap<(Molecule, usize), f64> = HashMap::new();
    fn go(
        u: &Universe,
        m: &Molecule,
        d: usize,
        cfg: &GameConfig,
        memo: &mut HashMap<(Molecule, usize), f64>,
        max_states: usize,
    ) -> Result<f64> {
        if let Some(p) = u.substrate_price(m) {
            return Ok(p);
        }
        if d == 0 {
            return Ok(cfg.p1);
        }
        if let Some(&v) = memo.get(&(m.clone(), d)) {
            return Ok(v);
        }
        let candidates = u.expand(m);
        let v = if candidates.is_empty() {
            cfg.p2
        } else {
            let mut best = f64::INFINITY;
            for r in &candidates {
                let mut val = r.cost;
                for q in &r.reactants {
                    val += go(u, q, d - 1, cfg, memo, max_states)?;
                }
                if val < best {
                    best = val;
                }
            }
            best
        };
        if memo.len() >= max_states {
            return Err(Error::Capacity(format!(
                "brute-force state count exceeded {max_states}"
            )));
        }
        memo.insert((m.clone(), d), v);
        Ok(v)
    }
    go(u, target, cfg.d_max, cfg, &mut memo, max_states)
}

/// [`brute_force_optimal_guarded`] with the default 10⁶-state guard.
pub fn brute_force_optimal(u: &Universe, target: &Molecule, cfg: &GameConfig) -> Result<f64> {
    brute_force_optimal_guarded(u, target, cfg, 1_000_000)
}
