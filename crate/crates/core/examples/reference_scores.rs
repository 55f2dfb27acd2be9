//! Recomputes the random/expert reference returns used for score normalization.
//!
//! `cargo run --release --example reference_scores [episodes]`

use r1mq::envs::{rollout_return, scripted_action, EnvKind, Tier, REFERENCE_EPISODES, REFERENCE_SEED};
use r1mq::numerics::RngStream;

fn main() -> r1mq::Result<()> {
    let episodes = match std::env::args().nth(1) {
        Some(s) => s.parse().expect("episode count"),
        None => REFERENCE_EPISODES,
    };
    for (i, kind) in EnvKind::ALL.into_iter().enumerate() {
        for (j, tier) in [Tier::Random, Tier::Expert].into_iter().enumerate() {
            let mut rng = RngStream::new(REFERENCE_SEED).fork((2 * i + j) as u64);
            let mut total = 0.0;
            for _ in 0..episodes {
                total += rollout_return(kind, &mut rng, |s, rng| scripted_action(tier, s, rng))?;
            }
            println!("{kind} {tier}: {:.17e}", total / episodes as f64);
        }
    }
    Ok(())
}
