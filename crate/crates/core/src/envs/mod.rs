//! Toy control tasks, scripted behaviour tiers and offline datasets.
//!
//! `Reach1D` moves a point towards a goal on `[−1, 1]`; its expert is
//! optimal in closed form. `PendulumSwing` is the classic torque-limited
//! swing-up. Dataset files are JSON Lines: one metadata object, then one
//! transition per line.

mod behavior;
mod dataset;
mod tasks;

pub use behavior::{
    expert_action, replay_action, rollout_return, scripted_action, MEDIUM_NOISE_STD, MEDIUM_RANDOM_PROB,
    REPLAY_LEVELS,
};
pub use dataset::{generate_dataset, OfflineDataset, Transition};
pub use tasks::{parse_env_id, wrap_angle, EnvKind, EnvState, StepResult, Tier};

use crate::error::Result;

/// Seed used by `examples/reference_scores.rs` to produce the constants below.
pub const REFERENCE_SEED: u64 = 20_240_917;
/// Episodes averaged per constant.
pub const REFERENCE_EPISODES: usize = 1_000_000;

const REACH1D_RANDOM: f64 = -66.896_377_802_901_9;
const REACH1D_EXPERT: f64 = -6.337_731_517_509_054;
const PENDULUM_RANDOM: f64 = -1_715.807_206_566_128_6;
const PENDULUM_EXPERT: f64 = -369.568_242_095_434_4;

/// Mean returns of the random and expert scripted policies.
pub fn reference_scores(kind: EnvKind) -> (f64, f64) {
    match kind {
        EnvKind::Reach1D => (REACH1D_RANDOM, REACH1D_EXPERT),
        EnvKind::Pendulum => (PENDULUM_RANDOM, PENDULUM_EXPERT),
    }
}

pub fn reference_scores_for_id(id: &str) -> Result<(f64, f64)> {
    Ok(reference_scores(parse_env_id(id)?.0))
}

/// `100·(raw − random)/(expert − random)` for `kind`.
pub fn normalized_score(kind: EnvKind, raw: f64) -> f64 {
    let (lo, hi) = reference_scores(kind);
    100.0 * (raw - lo) / (hi - lo)
}
