use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub const REACH_STEP: f64 = 0.05;
pub const REACH_HORIZON: usize = 100;

pub const PENDULUM_GRAVITY: f64 = 10.0;
pub const PENDULUM_MASS: f64 = 1.0;
pub const PENDULUM_LENGTH: f64 = 1.0;
pub const PENDULUM_DT: f64 = 0.05;
pub const PENDULUM_MAX_TORQUE: f64 = 2.0;
pub const PENDULUM_MAX_SPEED: f64 = 8.0;
pub const PENDULUM_HORIZON: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnvKind {
    Reach1D,
    Pendulum,
}

impl EnvKind {
    pub const ALL: [EnvKind; 2] = [EnvKind::Reach1D, EnvKind::Pendulum];

    pub fn id(self) -> &'static str {
        match self {
            EnvKind::Reach1D => "reach1d-v0",
            EnvKind::Pendulum => "pendulum-v0",
        }
    }

    fn stem(self) -> &'static str {
        match self {
            EnvKind::Reach1D => "reach1d",
            EnvKind::Pendulum => "pendulum",
        }
    }

    /// Observation width (the pendulum angle is encoded as `cos θ, sin θ`).
    pub fn state_dim(self) -> usize {
        match self {
            EnvKind::Reach1D => 2,
            EnvKind::Pendulum => 3,
        }
    }

    pub fn action_dim(self) -> usize {
        1
    }

    pub fn horizon(self) -> usize {
        match self {
            EnvKind::Reach1D => REACH_HORIZON,
            EnvKind::Pendulum => PENDULUM_HORIZON,
        }
    }

    pub fn reset(self, rng: &mut RngStream) -> EnvState {
        let phys = match self {
            EnvKind::Reach1D => [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)],
            EnvKind::Pendulum => [PI + rng.uniform_range(-0.1, 0.1), rng.uniform_range(-0.1, 0.1)],
        };
        EnvState { kind: self, phys, t: 0 }
    }

    /// Starts from an explicit physical state: `(x, g)` or `(θ, θ̇)`.
    pub fn state_from(self, phys: [f64; 2]) -> EnvState {
        EnvState { kind: self, phys, t: 0 }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// Behaviour-policy quality tiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Random,
    Medium,
    MediumReplay,
    MediumExpert,
    Expert,
}

impl Tier {
    pub const ALL: [Tier; 5] = [Tier::Random, Tier::Medium, Tier::MediumReplay, Tier::MediumExpert, Tier::Expert];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Random => "random",
            Tier::Medium => "medium",
            Tier::MediumReplay => "medium_replay",
            Tier::MediumExpert => "medium_expert",
            Tier::Expert => "expert",
        }
    }

    /// Default weight on the dataset log-likelihood term.
    pub fn default_beta(self) -> f64 {
        match self {
            Tier::MediumExpert | Tier::Expert => 100.0,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_");
        Tier::ALL
            .into_iter()
            .find(|t| t.name() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown tier '{s}'")))
    }
}

/// Parses `reach1d`, `reach1d-v0` or `reach1d-medium-v0` style names.
pub fn parse_env_id(id: &str) -> Result<(EnvKind, Option<Tier>)> {
    let body = id.strip_suffix("-v0").unwrap_or(id);
    for kind in EnvKind::ALL {
        if body == kind.stem() {
            return Ok((kind, None));
        }
        if let Some(rest) = body.strip_prefix(kind.stem()).and_then(|r| r.strip_prefix('-')) {
            return Ok((kind, Some(rest.parse()?)));
        }
    }
    Err(Error::InvalidArgument(format!("unknown environment '{id}'")))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvState {
    pub kind: EnvKind,
    /// `(x, g)` for reach, `(θ, θ̇)` for the pendulum with `θ = 0` upright.
    pub phys: [f64; 2],
    pub t: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub next: EnvState,
    pub reward: f64,
    pub done: bool,
}

/// Angle wrapped into `[−π, π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

impl EnvState {
    pub fn observation(&self) -> Vec<f64> {
        match self.kind {
            EnvKind::Reach1D => self.phys.to_vec(),
            EnvKind::Pendulum => vec![self.phys[0].cos(), self.phys[0].sin(), self.phys[1]],
        }
    }

    pub fn step(&self, action: &[f64]) -> Result<StepResult> {
        if action.len() != self.kind.action_dim() {
            return Err(Error::Shape(format!(
                "{} takes {} action components, got {}",
                self.kind,
                self.kind.action_dim(),
                action.len()
            )));
        }
        let a = action[0];
        if !(-1.0..=1.0).contains(&a) {
            return Err(Error::InvalidArgument(format!("action {a} outside [-1, 1]")));
        }
        let t = self.t + 1;
        let (phys, reward) = match self.kind {
            EnvKind::Reach1D => {
                let [x, g] = self.phys;
                let x2 = (x + REACH_STEP * a).clamp(-1.0, 1.0);
                ([x2, g], -(x2 - g).abs())
            }
            EnvKind::Pendulum => {
                let [th, thdot] = self.phys;
                let u = PENDULUM_MAX_TORQUE * a;
                let reward = -(wrap_angle(th).powi(2) + 0.1 * thdot * thdot + 0.001 * u * u);
                let l = PENDULUM_LENGTH;
                let acc = 3.0 * PENDULUM_GRAVITY / (2.0 * l) * th.sin() + 3.0 * u / (PENDULUM_MASS * l * l);
                let thdot2 = (thdot + acc * PENDULUM_DT).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
                ([th + thdot2 * PENDULUM_DT, thdot2], reward)
            }
        };
        Ok(StepResult {
            next: EnvState { kind: self.kind, phys, t },
            reward,
            done: t >= self.kind.horizon(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reach_dynamics() {
        let s = EnvKind::Reach1D.state_from([0.0, 0.5]);
        let r = s.step(&[1.0]).unwrap();
        assert_eq!(r.next.phys[0], 0.05);
        assert_eq!(r.reward, -(0.05f64 - 0.5).abs());
        let edge = EnvKind::Reach1D.state_from([0.99, 0.0]).step(&[1.0]).unwrap();
        assert_eq!(edge.next.phys[0], 1.0);
    }

    #[test]
    fn reach_goal_is_a_fixed_point() {
        let mut s = EnvKind::Reach1D.state_from([0.3, 0.3]);
        for _ in 0..10 {
            let r = s.step(&[0.0]).unwrap();
            assert_eq!(r.reward, 0.0);
            s = r.next;
        }
    }

    #[test]
    fn horizon_sets_done() {
        for kind in EnvKind::ALL {
            let mut s = kind.reset(&mut RngStream::new(1));
            for t in 1..=kind.horizon() {
                let r = s.step(&[0.1]).unwrap();
                assert_eq!(r.done, t == kind.horizon());
                s = r.next;
            }
        }
    }

    #[test]
    fn pendulum_upright_equilibrium() {
        let s = EnvKind::Pendulum.state_from([0.0, 0.0]);
        let r = s.step(&[0.0]).unwrap();
        assert_eq!(r.reward, 0.0);
        assert_eq!(r.next.phys, [0.0, 0.0]);
    }

    #[test]
    fn pendulum_upright_is_unstable_and_bottom_is_stable() {
        let mut top = EnvKind::Pendulum.state_from([0.01, 0.0]);
        let mut bottom = EnvKind::Pendulum.state_from([PI + 0.01, 0.0]);
        for _ in 0..20 {
            top = top.step(&[0.0]).unwrap().next;
            bottom = bottom.step(&[0.0]).unwrap().next;
        }
        assert!(top.phys[0] > 0.1);
        assert!(wrap_angle(bottom.phys[0] - PI).abs() < 0.05);
    }

    #[test]
    fn pendulum_speed_clipped() {
        let s = EnvKind::Pendulum.state_from([0.5, 7.9]);
        assert_eq!(s.step(&[1.0]).unwrap().next.phys[1], PENDULUM_MAX_SPEED);
    }

    #[test]
    fn out_of_range_actions_rejected() {
        let s = EnvKind::Reach1D.state_from([0.0, 0.0]);
        assert!(s.step(&[1.01]).is_err());
        assert!(s.step(&[f64::NAN]).is_err());
        assert!(s.step(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn reset_ranges() {
        let mut rng = RngStream::new(3);
        for _ in 0..100 {
            let r = EnvKind::Reach1D.reset(&mut rng);
            assert!(r.phys.iter().all(|v| v.abs() <= 1.0));
            let p = EnvKind::Pendulum.reset(&mut rng);
            assert!(wrap_angle(p.phys[0]).abs() > PI - 0.11);
        }
    }

    #[test]
    fn ids_parse() {
        assert_eq!(parse_env_id("reach1d").unwrap(), (EnvKind::Reach1D, None));
        assert_eq!(parse_env_id("pendulum-v0").unwrap(), (EnvKind::Pendulum, None));
        assert_eq!(parse_env_id("reach1d-medium-v0").unwrap(), (EnvKind::Reach1D, Some(Tier::Medium)));
        assert_eq!(
            parse_env_id("pendulum-medium-replay-v0").unwrap(),
            (EnvKind::Pendulum, Some(Tier::MediumReplay))
        );
        assert_eq!(parse_env_id("reach1d-medium_expert").unwrap().1, Some(Tier::MediumExpert));
        assert!(parse_env_id("cartpole-v0").is_err());
        assert!(parse_env_id("reach1d-great-v0").is_err());
    }

    #[test]
    fn wrap_range() {
        for th in [-10.0, -PI, 0.0, 3.0, PI, 7.0, 100.0] {
            let w = wrap_angle(th);
            assert!((-PI..PI).contains(&w));
            assert!(((th - w) / (2.0 * PI)).fract().abs() < 1e-9 || ((th - w) / (2.0 * PI)).fract().abs() > 1.0 - 1e-9);
        }
    }
}
