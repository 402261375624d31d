//! Reaction templates: substring-triggered rewrite rules.
//!
//! A template matches a molecule when its `pattern` occurs as a substring;
//! the rewrite fires at the *first* occurrence, which makes application a
//! pure function of `(template, molecule)`. Depending on the operation the
//! product is split into capped fragments, rewritten in place, or split
//! three ways around a bridge fragment.

use crate::error::{Error, Result};
use crate::universe::molecule::Molecule;

/// Rewrite operation applied at the first pattern occurrence.
///
/// Writing the matched product as `x · pattern · y`:
/// * `Split` yields `[x·left_cap, right_cap·y]` — both fragments are shorter
///   than the product as long as each cap is shorter than the pattern, which
///   generation guarantees, so these are the decomposing workhorse rules.
/// * `Replace` yields `[x·replacement·y]`; a replacement longer than the
///   pattern is the complexity-*increasing* case (one reactant longer than
///   the product).
/// * `Split3` yields `[x·left_cap, bridge, right_cap·y]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RewriteOp {
    Split { left_cap: String, right_cap: String },
    Replace { replacement: String },
    Split3 { left_cap: String, bridge: String, right_cap: String },
}

impl RewriteOp {
    /// Compact single-token encoding used by the universe file format.
    pub fn encode(&self) -> String {
        match self {
            RewriteOp::Split { left_cap, right_cap } => format!("split:{left_cap}:{right_cap}"),
            RewriteOp::Replace { replacement } => format!("replace:{replacement}"),
            RewriteOp::Split3 { left_cap, bridge, right_cap } => {
                format!("split3:{left_cap}:{bridge}:{right_cap}")
            }
        }
    }

    pub fn decode(token: &str) -> Result<RewriteOp> {
        let parts: Vec<&str> = token.split(':').collect();
        match parts.as_slice() {
            ["split", l, r] => Ok(RewriteOp::Split { left_cap: l.to_string(), right_cap: r.to_string() }),
            ["replace", rep] => Ok(RewriteOp::Replace { replacement: rep.to_string() }),
            ["split3", l, b, r] => Ok(RewriteOp::Split3 {
                left_cap: l.to_string(),
                bridge: b.to_string(),
                right_cap: r.to_string(),
            }),
            _ => Err(Error::Format(format!("unrecognized rewrite op `{token}`"))),
        }
    }
}

/// A rewrite rule of the universe.
#[derive(Clone, Debug, PartialEq)]
pub struct ReactionTemplate {
    pub id: u32,
    pub pattern: String,
    pub op: RewriteOp,
    /// Relevance used to order candidate reactions (descending); ties break
    /// toward the smaller template id.
    pub relevance_weight: f64,
}

impl ReactionTemplate {
    pub fn new(id: u32, pattern: impl Into<String>, op: RewriteOp, relevance_weight: f64) -> Result<Self> {
        let pattern = pattern.into();
        if pattern.is_empty() {
            return Err(Error::InvalidParameter(format!("template {id}: empty pattern")));
        }
        if !relevance_weight.is_finite() || relevance_weight < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "template {id}: relevance weight must be finite and >= 0"
            )));
        }
        let fragments: Vec<&String> = match &op {
            RewriteOp::Split { left_cap, right_cap } => vec![left_cap, right_cap],
            RewriteOp::Replace { replacement } => vec![replacement],
            RewriteOp::Split3 { left_cap, bridge, right_cap } => vec![left_cap, bridge, right_cap],
        };
        if fragments.iter().any(|f| f.is_empty()) {
            return Err(Error::InvalidParameter(format!(
                "template {id}: rewrite fragments must be non-empty"
            )));
        }
        Ok(ReactionTemplate { id, pattern, op, relevance_weight })
    }

    /// Applies the rewrite at the first pattern occurrence.
    ///
    /// Returns `None` when the pattern does not occur, when any reactant
    /// would leave the universe (size outside `1..=max_size`), or when a
    /// reactant would equal the product (self-loops are forbidden).
    pub fn apply(&self, m: &Molecule, max_size: usize) -> Option<Vec<Molecule>> {
        let canon = m.canon();
        let at = canon.find(&self.pattern)?;
        let x = &canon[..at];
        let y = &canon[at + self.pattern.len()..];
        let fragments: Vec<String> = match &self.op {
            RewriteOp::Split { left_cap, right_cap } => {
                vec![format!("{x}{left_cap}"), format!("{right_cap}{y}")]
            }
            RewriteOp::Replace { replacement } => vec![format!("{x}{replacement}{y}")],
            RewriteOp::Split3 { left_cap, bridge, right_cap } => {
                vec![format!("{x}{left_cap}"), bridge.clone(), format!("{right_cap}{y}")]
            }
        };
        if fragments.iter().any(|f| f.is_empty() || f.len() > max_size || f == canon) {
            return None;
        }
        Some(fragments.into_iter().map(Molecule::new).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tpl(pattern: &str, op: RewriteOp) -> ReactionTemplate {
        ReactionTemplate::new(0, pattern, op, 0.5).unwrap()
    }

    #[test]
    fn split_fires_at_first_occurrence() {
        let t = tpl("ab", RewriteOp::Split { left_cap: "c".into(), right_cap: "d".into() });
        let rs = t.apply(&Molecule::new("xxabyyabzz"), 32).unwrap();
        assert_eq!(rs, vec![Molecule::new("xxc"), Molecule::new("dyyabzz")]);
    }

    #[test]
    fn replace_can_grow_one_reactant() {
        let t = tpl("ab", RewriteOp::Replace { replacement: "cccc".into() });
        let rs = t.apply(&Molecule::new("ab"), 32).unwrap();
        assert_eq!(rs, vec![Molecule::new("cccc")]);
        assert!(rs[0].size() > 2);
    }

    #[test]
    fn application_is_pure() {
        let t = tpl("ab", RewriteOp::Split3 { left_cap: "a".into(), bridge: "cc".into(), right_cap: "b".into() });
        let m = Molecule::new("zabz");
        assert_eq!(t.apply(&m, 16), t.apply(&m, 16));
    }

    #[test]
    fn no_match_and_size_guard() {
        let t = tpl("ab", RewriteOp::Replace { replacement: "cccc".into() });
        assert!(t.apply(&Molecule::new("xyz"), 32).is_none());
        // Result would be 5 characters; cap at 4 rejects the application.
        assert!(t.apply(&Molecule::new("zab"), 4).is_none());
    }

    #[test]
    fn self_loop_rejected() {
        // Replacing "ab" by "ab" would reproduce the product.
        let t = tpl("ab", RewriteOp::Replace { replacement: "ab".into() });
        assert!(t.apply(&Molecule::new("zabz"), 32).is_none());
    }

    #[test]
    fn empty_fragment_rejected_at_construction() {
        assert!(ReactionTemplate::new(
            0,
            "ab",
            RewriteOp::Split { left_cap: String::new(), right_cap: "d".into() },
            0.5
        )
        .is_err());
    }

    #[test]
    fn op_encoding_round_trips() {
        for op in [
            RewriteOp::Split { left_cap: "c".into(), right_cap: "d".into() },
            RewriteOp::Replace { replacement: "ccc".into() },
            RewriteOp::Split3 { left_cap: "a".into(), bridge: "bb".into(), right_cap: "c".into() },
        ] {
            assert_eq!(RewriteOp::decode(&op.encode()).unwrap(), op);
        }
    }
}
