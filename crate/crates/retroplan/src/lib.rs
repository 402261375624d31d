//! retroplan — learning near-optimal synthesis-planning policies in a
//! seeded synthetic reaction universe.
//!
//! The crate builds a deterministic artificial chemistry (molecules are
//! strings, reactions are template rewrites), plays the single-player
//! retrosynthesis game over it, learns a value function by policy
//! iteration with ε-greedy self-play, and checks the learned play
//! against an exact dynamic-programming solution of everything the
//! learner has ever seen.
//!
//! Modules, bottom to top:
//!
//! * [`universe`] — seeded universe generation: templates, buyable
//!   substrates, molecule pool, fingerprints, target selection.
//! * [`game`] — the depth-limited retrosynthesis game: synthesis trees,
//!   cost audit, outcome classification.
//! * [`policy`] — policies over candidate reactions: random, symmetric
//!   disconnection, ε-greedy wrappers, value-greedy lookahead.
//! * [`value`] — realized-cost store, value network (fingerprint MLP
//!   with batch norm trained under MAE), estimate precedence.
//! * [`dp`] — cumulative reaction network, exact layered minimum-cost
//!   DP, optimal-tree extraction, brute-force oracle.
//! * [`train`] — the policy-iteration trainer and evaluation harness.
//!
//! Start with the runnable examples: `universe_tour`,
//! `play_single_game`, `heuristic_noise_sweep`, `dp_vs_brute_force`,
//! `value_network_basics`, `train_and_compare`.

pub mod cli;
pub mod config;
pub mod dp;
pub mod error;
pub mod game;
pub mod policy;
pub mod rng;
pub mod train;
pub mod universe;
pub mod value;

pub use error::{Error, Result};
