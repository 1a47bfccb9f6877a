//! Compute-adaptive test-time search over synthetic reasoning tasks.
//!
//! The crate has three layers:
//!
//! * **Search strategies** ([`search`]): Best-of-N, beam search, and majority
//!   voting over an abstract step [`core::Policy`] scored by an abstract
//!   process reward model ([`prm::Prm`]), with explicit budget accounting.
//! * **CATS controller** ([`cats`]): a compute-aware tree-search controller.
//!   An actor-critic pair (hand-rolled [`nn::Mlp`]s) observes summary features
//!   of the current candidate set and decides, per node and per step, how many
//!   extra candidates to sample, how many to retain, and which sampling preset
//!   to use.
//! * **Bound evaluation** ([`theory`]): closed-form PAC-Bayes and
//!   answer-accuracy bounds plus Monte Carlo verifiers that check them on
//!   constructed environments ([`env`]).
//!
//! Everything is deterministic given a seed: randomness flows through
//! [`core::RngStream`], a counter-based per-stream generator, so parallel
//! trials reproduce bit-identically regardless of scheduling.
//!
//! Each major capability has a runnable example:
//!
//! ```text
//! cargo run --release -p catsearch --example best_of_n
//! cargo run --release -p catsearch --example beam_search
//! cargo run --release -p catsearch --example majority_vote
//! cargo run --release -p catsearch --example budget_sweep
//! cargo run --release -p catsearch --example prm_training
//! cargo run --release -p catsearch --example train_controller
//! cargo run --release -p catsearch --example verify_bounds
//! ```
//!
//! The same capabilities are reachable through the thin `catsearch` binary
//! (`run`, `verify-thm2`, `verify-pacbayes`, `train-cats`, `infer-cats`,
//! `plot-data`, `sparsity-report`).

pub mod cats;
pub mod core;
pub mod env;
pub mod error;
pub mod harness;
pub mod nn;
pub mod prm;
pub mod search;
pub mod theory;

pub use error::{Error, Result};
