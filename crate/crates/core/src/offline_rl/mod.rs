//! Pessimistic actor-critic training on a fixed transition dataset.
//!
//! The critic is a rank-one ensemble regressed onto a shared target built
//! from the minimum target head. The actor maximizes the minimum online
//! head plus an entropy bonus and a dataset log-likelihood term. The
//! temperature is learned in log space.

mod trainer;
mod updates;

pub use trainer::{evaluate, policy_value, train, Diverged, EvalResult, MetricsRow, TrainError, TrainMetrics, METRICS_HEADER};
pub use updates::{
    alpha_update, compute_bellman_target, critic_update, policy_gradients, policy_update, soft_update, CriticStep,
    PolicyStep,
};

use crate::envs::OfflineDataset;
use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, Matrix, RngStream};
use crate::policy::GaussianPolicy;
use crate::rank_one::{init_network, MimoQNetwork};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub ensemble_size: usize,
    pub beta: f64,
    /// Defaults to `−dim(A)` when unset.
    pub target_entropy: Option<f64>,
    pub batch_size: usize,
    pub total_steps: usize,
    pub policy_delay: usize,
    pub seed: u64,
    pub critic_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    pub critic_lr: f64,
    pub policy_lr: f64,
    pub alpha_lr: f64,
    pub initial_alpha: f64,
    /// Holds the temperature at this value instead of learning it.
    pub fixed_alpha: Option<f64>,
    /// Metrics row every `log_every` steps; 0 disables logging.
    pub log_every: usize,
    /// Evaluate against the live task every `eval_every` steps; 0 disables.
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Abort when any `|Q|` exceeds this; non-finite values always abort.
    pub divergence_threshold: Option<f64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            gamma: 0.99,
            tau: 0.005,
            ensemble_size: 10,
            beta: 0.0,
            target_entropy: None,
            batch_size: 256,
            total_steps: 100_000,
            policy_delay: 2,
            seed: 0,
            critic_hidden: vec![256, 256, 256],
            policy_hidden: vec![256, 256],
            critic_lr: 3e-4,
            policy_lr: 3e-4,
            alpha_lr: 3e-4,
            initial_alpha: 1.0,
            fixed_alpha: None,
            log_every: 1000,
            eval_every: 1000,
            eval_episodes: 10,
            divergence_threshold: Some(1e8),
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if self.ensemble_size == 0 {
            return bad("ensemble size must be at least 1".into());
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return bad(format!("beta must be a finite value >= 0, got {}", self.beta));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.policy_delay == 0 {
            return bad("policy delay must be at least 1".into());
        }
        if self.critic_hidden.is_empty() || self.policy_hidden.is_empty() {
            return bad("critic and policy need at least one hidden layer".into());
        }
        if self.critic_hidden.contains(&0) || self.policy_hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        for (name, lr) in [("critic", self.critic_lr), ("policy", self.policy_lr), ("alpha", self.alpha_lr)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return bad(format!("{name} learning rate must be positive, got {lr}"));
            }
        }
        if !(self.initial_alpha > 0.0) || !self.initial_alpha.is_finite() {
            return bad(format!("initial alpha must be positive, got {}", self.initial_alpha));
        }
        if let Some(a) = self.fixed_alpha {
            if !(a >= 0.0) || !a.is_finite() {
                return bad(format!("fixed alpha must be >= 0, got {a}"));
            }
        }
        if self.eval_every > 0 && self.eval_episodes == 0 {
            return bad("evaluation needs at least one episode".into());
        }
        if let Some(t) = self.divergence_threshold {
            if !(t > 0.0) {
                return bad(format!("divergence threshold must be positive, got {t}"));
            }
        }
        Ok(())
    }

    pub fn target_entropy_for(&self, action_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(action_dim as f64))
    }
}

/// Everything that evolves during training.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub critic: MimoQNetwork,
    pub target_critic: MimoQNetwork,
    pub policy: GaussianPolicy,
    pub log_alpha: f64,
    pub fixed_alpha: Option<f64>,
    pub critic_adam: AdamState,
    pub policy_adam: AdamState,
    pub alpha_adam: AdamState,
    pub critic_updates: usize,
    pub policy_updates: usize,
    pub alpha_updates: usize,
    pub rng: RngStream,
}

impl TrainState {
    pub fn new(config: &TrainerConfig, state_dim: usize, action_dim: usize) -> Result<Self> {
        config.validate()?;
        let root = RngStream::new(config.seed);
        let mut dims = vec![state_dim + action_dim];
        dims.extend_from_slice(&config.critic_hidden);
        dims.push(1);
        let critic = init_network(&dims, config.ensemble_size, &mut root.fork(1))?;
        let policy = GaussianPolicy::new(state_dim, action_dim, &config.policy_hidden, &mut root.fork(2))?;
        let adam = AdamConfig::default();
        Ok(TrainState {
            target_critic: critic.clone(),
            critic_adam: AdamState::new(critic.num_params(), adam.with_learning_rate(config.critic_lr)),
            policy_adam: AdamState::new(policy.num_params(), adam.with_learning_rate(config.policy_lr)),
            alpha_adam: AdamState::new(1, adam.with_learning_rate(config.alpha_lr)),
            critic,
            policy,
            log_alpha: config.initial_alpha.ln(),
            fixed_alpha: config.fixed_alpha,
            critic_updates: 0,
            policy_updates: 0,
            alpha_updates: 0,
            rng: root.fork(3),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.fixed_alpha.unwrap_or_else(|| self.log_alpha.exp())
    }
}

/// A minibatch of transitions stored row-wise.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_states: Matrix,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// `[s, a]` rows as critic input.
    pub fn state_actions(&self) -> Matrix {
        self.states.hcat(&self.actions).expect("batch rows agree")
    }
}

/// Dataset columns packed for fast minibatch gathers.
#[derive(Clone, Debug)]
pub struct PackedDataset {
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
    state_dim: usize,
    action_dim: usize,
}

impl PackedDataset {
    pub fn new(ds: &OfflineDataset) -> Result<Self> {
        ds.validate()?;
        let mut p = PackedDataset {
            states: Vec::with_capacity(ds.len() * ds.state_dim()),
            actions: Vec::with_capacity(ds.len() * ds.action_dim()),
            rewards: Vec::with_capacity(ds.len()),
            next_states: Vec::with_capacity(ds.len() * ds.state_dim()),
            dones: Vec::with_capacity(ds.len()),
            state_dim: ds.state_dim(),
            action_dim: ds.action_dim(),
        };
        for t in &ds.transitions {
            p.states.extend_from_slice(&t.s);
            p.actions.extend_from_slice(&t.a);
            p.rewards.push(t.r);
            p.next_states.extend_from_slice(&t.sp);
            p.dones.push(t.done);
        }
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn gather(&self, idx: &[usize]) -> Batch {
        let (ds, da) = (self.state_dim, self.action_dim);
        let pick = |src: &[f64], w: usize| {
            let data = idx.iter().flat_map(|&i| src[i * w..(i + 1) * w].iter().copied()).collect();
            Matrix::from_vec(idx.len(), w, data).expect("sized above")
        };
        Batch {
            states: pick(&self.states, ds),
            actions: pick(&self.actions, da),
            rewards: idx.iter().map(|&i| self.rewards[i]).collect(),
            next_states: pick(&self.next_states, ds),
            dones: idx.iter().map(|&i| self.dones[i]).collect(),
        }
    }

    /// Uniform draw with replacement.
    pub fn sample(&self, size: usize, rng: &mut RngStream) -> Batch {
        let idx: Vec<usize> = (0..size).map(|_| rng.below(self.len())).collect();
        self.gather(&idx)
    }

    pub fn all_states(&self) -> Matrix {
        Matrix::from_vec(self.len(), self.state_dim, self.states.clone()).expect("sized above")
    }
}
