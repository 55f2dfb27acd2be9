//! Rank-one MIMO Q-ensembles for uncertainty-aware offline reinforcement learning.
//!
//! The crate is organised bottom-up:
//!
//! - [`numerics`]: dense matrices, seeded randomness, Adam, finite differences.
//! - [`rank_one`]: the rank-one ensemble critic with single-pass multi-head inference.
//! - [`uncertainty`]: per-sample head statistics and the expected-minimum coefficient.
//! - [`dense`] and [`policy`]: the tanh-squashed Gaussian actor.
//! - [`offline_rl`]: pessimistic actor-critic training on fixed datasets.
//! - [`envs`]: toy control tasks, behaviour tiers and the JSONL dataset format.
//! - [`cli`]: the `r1mq` command-line front end, benchmark and ablation drivers.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::excessive_precision)]

pub mod cli;
pub mod dense;
pub mod envs;
pub mod error;
pub mod numerics;
pub mod offline_rl;
pub mod policy;
pub mod rank_one;
pub mod uncertainty;

pub use error::{Error, Result};
