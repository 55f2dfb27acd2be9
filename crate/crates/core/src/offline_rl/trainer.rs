use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;

use crate::envs::{normalized_score, EnvKind, OfflineDataset};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::policy::GaussianPolicy;
use crate::rank_one::MimoQNetwork;
use crate::uncertainty::head_stats;

use super::updates::{alpha_update, compute_bellman_target, critic_update_guarded, policy_update, soft_update};
use super::{PackedDataset, TrainState, TrainerConfig};

pub const METRICS_HEADER: &str = "step,critic_loss,policy_loss,alpha,q_mean,q_min,q_std,bc_loglik,eval_score";

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub critic_loss: f64,
    /// Loss of the latest policy step; NaN before the first one.
    pub policy_loss: f64,
    pub alpha: f64,
    pub q_mean: f64,
    pub q_min: f64,
    pub q_std: f64,
    pub bc_loglik: f64,
    pub eval_score: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainMetrics {
    pub rows: Vec<MetricsRow>,
}

impl TrainMetrics {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(METRICS_HEADER);
        out.push('\n');
        for r in &self.rows {
            write!(
                out,
                "{},{},{},{},{},{},{},{},",
                r.step, r.critic_loss, r.policy_loss, r.alpha, r.q_mean, r.q_min, r.q_std, r.bc_loglik
            )
            .unwrap();
            if let Some(e) = r.eval_score {
                write!(out, "{e}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Training aborted on non-finite or runaway values.
#[derive(Clone, Debug)]
pub struct Diverged {
    pub step: usize,
    pub reason: String,
    /// State just before the offending update was applied.
    pub state: TrainState,
    pub metrics: TrainMetrics,
}

#[derive(Debug)]
pub enum TrainError {
    Invalid(Error),
    Diverged(Box<Diverged>),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::Invalid(e) => write!(f, "{e}"),
            TrainError::Diverged(d) => write!(f, "training diverged at step {}: {}", d.step, d.reason),
        }
    }
}

impl std::error::Error for TrainError {}

impl From<Error> for TrainError {
    fn from(e: Error) -> Self {
        TrainError::Invalid(e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult {
    pub raw: f64,
    pub normalized: f64,
}

/// Mean undiscounted return of `episodes` rollouts of `tanh(mean)`, run side by side.
pub fn evaluate(policy: &GaussianPolicy, kind: EnvKind, episodes: usize, rng: &mut RngStream) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("evaluation needs at least one episode".into()));
    }
    if policy.state_dim() != kind.state_dim() || policy.action_dim() != kind.action_dim() {
        return Err(Error::Shape(format!("policy dims do not match {kind}")));
    }
    let mut states: Vec<_> = (0..episodes).map(|_| kind.reset(rng)).collect();
    let mut total = 0.0;
    for _ in 0..kind.horizon() {
        let obs: Vec<f64> = states.iter().flat_map(|s| s.observation()).collect();
        let actions = policy.deterministic_actions(&Matrix::from_vec(episodes, kind.state_dim(), obs)?)?;
        for (i, s) in states.iter_mut().enumerate() {
            let step = s.step(actions.row(i))?;
            total += step.reward;
            *s = step.next;
        }
    }
    let raw = total / episodes as f64;
    Ok(EvalResult {
        raw,
        normalized: normalized_score(kind, raw),
    })
}

fn diverged(step: usize, reason: String, state: &TrainState, metrics: &TrainMetrics) -> TrainError {
    TrainError::Diverged(Box::new(Diverged {
        step,
        reason,
        state: state.clone(),
        metrics: metrics.clone(),
    }))
}

/// Runs `config.total_steps` critic updates with a policy and temperature
/// update every `policy_delay` steps. Deterministic in `config.seed`.
pub fn train(config: &TrainerConfig, dataset: &OfflineDataset) -> std::result::Result<(TrainState, TrainMetrics), TrainError> {
    let data = PackedDataset::new(dataset)?;
    let mut state = TrainState::new(config, dataset.state_dim(), dataset.action_dim())?;
    let target_entropy = config.target_entropy_for(dataset.action_dim());
    let mut eval_rng = RngStream::new(config.seed).fork(4);
    let mut metrics = TrainMetrics::default();
    let (mut policy_loss, mut bc_loglik) = (f64::NAN, f64::NAN);

    for step in 1..=config.total_steps {
        let batch = data.sample(config.batch_size, &mut state.rng);
        let alpha = state.alpha();
        let targets = match compute_bellman_target(&batch, &state.target_critic, &state.policy, alpha, config.gamma, &mut state.rng) {
            Ok(y) => y,
            Err(e) => return Err(diverged(step, e.to_string(), &state, &metrics)),
        };
        let c = match critic_update_guarded(
            &mut state.critic,
            &mut state.critic_adam,
            &batch,
            &targets,
            config.divergence_threshold,
        ) {
            Ok(c) => c,
            Err(Error::NonFinite(m) | Error::Diverged(m)) => return Err(diverged(step, m, &state, &metrics)),
            Err(e) => return Err(e.into()),
        };
        state.critic_updates += 1;

        if step % config.policy_delay == 0 {
            let p = match policy_update(
                &mut state.policy,
                &mut state.policy_adam,
                &state.critic,
                &batch,
                alpha,
                config.beta,
                &mut state.rng,
            ) {
                Ok(p) => p,
                Err(Error::NonFinite(m)) => return Err(diverged(step, m, &state, &metrics)),
                Err(e) => return Err(e.into()),
            };
            state.policy_updates += 1;
            policy_loss = p.loss;
            bc_loglik = p.bc_loglik;
            if state.fixed_alpha.is_none() {
                alpha_update(&mut state.log_alpha, &mut state.alpha_adam, &p.sample_log_probs, target_entropy)?;
                state.alpha_updates += 1;
            }
        }
        soft_update(&mut state.target_critic, &state.critic, config.tau)?;

        let log_now = config.log_every > 0 && step % config.log_every == 0;
        let eval_now = config.eval_every > 0 && step % config.eval_every == 0;
        let eval_score = if eval_now {
            Some(evaluate(&state.policy, dataset.env, config.eval_episodes, &mut eval_rng)?.normalized)
        } else {
            None
        };
        if log_now || eval_now {
            metrics.rows.push(MetricsRow {
                step,
                critic_loss: c.loss,
                policy_loss,
                alpha: state.alpha(),
                q_mean: c.q_mean,
                q_min: c.q_min,
                q_std: c.q_std,
                bc_loglik,
                eval_score,
            });
        }
    }
    Ok((state, metrics))
}

/// Dataset averages of `min_k Q^k(s, π(s))` and of the head mean, with `π(s) = tanh(mean)`.
pub fn policy_value(critic: &MimoQNetwork, policy: &GaussianPolicy, states: &Matrix) -> Result<(f64, f64)> {
    const CHUNK: usize = 2048;
    let (n, d) = states.shape();
    if n == 0 {
        return Err(Error::InvalidArgument("no states to evaluate".into()));
    }
    let (mut min_sum, mut mean_sum) = (0.0, 0.0);
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let s = Matrix::from_vec(end - start, d, states.as_slice()[start * d..end * d].to_vec())?;
        let a = policy.deterministic_actions(&s)?;
        let heads = critic.q_heads(&s.hcat(&a)?)?;
        for r in 0..heads.rows() {
            let st = head_stats(heads.row(r))?;
            min_sum += st.min;
            mean_sum += st.mean;
        }
    }
    Ok((min_sum / n as f64, mean_sum / n as f64))
}
