use crate::error::Result;
use crate::numerics::RngStream;

use super::tasks::{wrap_angle, EnvKind, EnvState, Tier, PENDULUM_GRAVITY, PENDULUM_LENGTH, REACH_STEP};

pub const MEDIUM_NOISE_STD: f64 = 0.3;
pub const MEDIUM_RANDOM_PROB: f64 = 0.3;

/// Expert-gain levels of the replay snapshots.
pub const REPLAY_LEVELS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

const SWING_GAIN: f64 = 0.4;
const CATCH_ANGLE: f64 = 0.6;
const PD_P: f64 = 12.0;
const PD_D: f64 = 2.5;

/// Noise-free controller for each task.
pub fn expert_action(state: &EnvState) -> f64 {
    match state.kind {
        EnvKind::Reach1D => {
            let [x, g] = state.phys;
            ((g - x) / REACH_STEP).clamp(-1.0, 1.0)
        }
        EnvKind::Pendulum => {
            let th = wrap_angle(state.phys[0]);
            let thdot = state.phys[1];
            let torque = if th.abs() < CATCH_ANGLE {
                -(PD_P * th + PD_D * thdot)
            } else {
                // Pump energy towards the upright level: E = ½θ̇² + 3g/(2ℓ)(cos θ − 1).
                let energy = 0.5 * thdot * thdot + 1.5 * PENDULUM_GRAVITY / PENDULUM_LENGTH * (th.cos() - 1.0);
                let dir = if thdot.abs() < 1e-3 { 1.0 } else { thdot.signum() };
                -SWING_GAIN * energy * dir * 10.0
            };
            (torque / 2.0).clamp(-1.0, 1.0)
        }
    }
}

fn medium_action(state: &EnvState, rng: &mut RngStream) -> f64 {
    let noisy = (expert_action(state) + MEDIUM_NOISE_STD * rng.normal()).clamp(-1.0, 1.0);
    let uniform = rng.uniform_range(-1.0, 1.0);
    if rng.uniform() < MEDIUM_RANDOM_PROB {
        uniform
    } else {
        noisy
    }
}

/// One snapshot of the replay sweep: random with probability `1 − level`,
/// otherwise the medium action.
pub fn replay_action(state: &EnvState, level: f64, rng: &mut RngStream) -> f64 {
    let medium = medium_action(state, rng);
    let uniform = rng.uniform_range(-1.0, 1.0);
    if rng.uniform() < level {
        medium
    } else {
        uniform
    }
}

/// Action of a tier's behaviour policy.
///
/// Mixed tiers have no single policy; `medium_replay` acts as its final
/// snapshot and `medium_expert` as the expert.
pub fn scripted_action(tier: Tier, state: &EnvState, rng: &mut RngStream) -> Result<Vec<f64>> {
    let a = match tier {
        Tier::Random => rng.uniform_range(-1.0, 1.0),
        Tier::Medium => medium_action(state, rng),
        Tier::MediumReplay => replay_action(state, 1.0, rng),
        Tier::Expert | Tier::MediumExpert => expert_action(state),
    };
    Ok(vec![a])
}

/// Undiscounted return of one episode under `act`.
pub fn rollout_return<F>(kind: EnvKind, rng: &mut RngStream, mut act: F) -> Result<f64>
where
    F: FnMut(&EnvState, &mut RngStream) -> Result<Vec<f64>>,
{
    let mut state = kind.reset(rng);
    let mut total = 0.0;
    loop {
        let a = act(&state, rng)?;
        let step = state.step(&a)?;
        total += step.reward;
        if step.done {
            return Ok(total);
        }
        state = step.next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn returns(kind: EnvKind, tier: Tier, episodes: usize, seed: u64) -> (f64, f64) {
        let mut rng = RngStream::new(seed);
        let r: Vec<f64> = (0..episodes)
            .map(|_| rollout_return(kind, &mut rng, |s, rng| scripted_action(tier, s, rng)).unwrap())
            .collect();
        let n = r.len() as f64;
        let mean = r.iter().sum::<f64>() / n;
        let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    }

    #[test]
    fn reach_expert_arrives_in_time() {
        let mut rng = RngStream::new(5);
        for _ in 0..200 {
            let mut s = EnvKind::Reach1D.reset(&mut rng);
            let d = (s.phys[0] - s.phys[1]).abs();
            let budget = (d / REACH_STEP).ceil() as usize;
            for _ in 0..budget {
                s = s.step(&[expert_action(&s)]).unwrap().next;
            }
            assert!((s.phys[0] - s.phys[1]).abs() < REACH_STEP);
        }
    }

    #[test]
    fn pendulum_expert_swings_up_and_holds() {
        let mut rng = RngStream::new(6);
        for _ in 0..20 {
            let mut s = EnvKind::Pendulum.reset(&mut rng);
            for _ in 0..EnvKind::Pendulum.horizon() {
                s = s.step(&[expert_action(&s)]).unwrap().next;
            }
            assert!(wrap_angle(s.phys[0]).abs() < 0.05, "final angle {}", s.phys[0]);
            assert!(s.phys[1].abs() < 0.1);
        }
    }

    #[test]
    fn random_actions_centred() {
        let mut rng = RngStream::new(7);
        let s = EnvKind::Reach1D.state_from([0.0, 0.0]);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| scripted_action(Tier::Random, &s, &mut rng).unwrap()[0])
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 0.02, "{mean}");
    }

    #[test]
    fn tiers_ordered_with_margin() {
        for kind in EnvKind::ALL {
            let (r, se_r) = returns(kind, Tier::Random, 100, 10);
            let (m, se_m) = returns(kind, Tier::Medium, 100, 11);
            let (e, se_e) = returns(kind, Tier::Expert, 100, 12);
            assert!(m - r > 3.0 * (se_r.powi(2) + se_m.powi(2)).sqrt(), "{kind}: random {r} medium {m}");
            assert!(e - m > 3.0 * (se_m.powi(2) + se_e.powi(2)).sqrt(), "{kind}: medium {m} expert {e}");
        }
    }

    #[test]
    fn actions_within_bounds() {
        let mut rng = RngStream::new(8);
        for kind in EnvKind::ALL {
            for tier in Tier::ALL {
                for _ in 0..200 {
                    let s = kind.reset(&mut rng);
                    let a = scripted_action(tier, &s, &mut rng).unwrap();
                    assert!(a.iter().all(|v| v.abs() <= 1.0));
                }
            }
        }
    }
}
