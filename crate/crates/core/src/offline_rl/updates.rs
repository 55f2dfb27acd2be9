use crate::error::{Error, Result};
use crate::numerics::{AdamState, Matrix, RngStream};
use crate::policy::{data_log_prob, sample_head_grads, GaussianPolicy, PolicyGrads};
use crate::rank_one::{blocks_to_heads, MimoQNetwork};
use crate::uncertainty::head_stats;

use super::Batch;

fn row_min(heads: &Matrix) -> Vec<(usize, f64)> {
    (0..heads.rows())
        .map(|r| {
            let row = heads.row(r);
            let mut best = (0, row[0]);
            for (k, &v) in row.iter().enumerate().skip(1) {
                if v < best.1 {
                    best = (k, v);
                }
            }
            best
        })
        .collect()
}

/// `y = r + γ(1 − done)[min_k Q_target^k(s′, a′) − α log π(a′|s′)]` with
/// `a′ ~ π(·|s′)`. Plain values: nothing upstream sees a gradient.
pub fn compute_bellman_target(
    batch: &Batch,
    target: &MimoQNetwork,
    policy: &GaussianPolicy,
    alpha: f64,
    gamma: f64,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let fwd = policy.forward(&batch.next_states)?;
    let next = policy.sample(&fwd, rng);
    let heads = target.q_heads(&batch.next_states.hcat(&next.actions)?)?;
    let mins = row_min(&heads);
    let y: Vec<f64> = (0..batch.len())
        .map(|i| {
            let cont = if batch.dones[i] { 0.0 } else { 1.0 };
            batch.rewards[i] + gamma * cont * (mins[i].1 - alpha * next.log_probs[i])
        })
        .collect();
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "Bellman target {} for transition {i} (r = {}, min target head = {}, log pi = {})",
            y[i], batch.rewards[i], mins[i].1, next.log_probs[i]
        )));
    }
    Ok(y)
}

/// Per-step critic diagnostics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CriticStep {
    pub loss: f64,
    /// Batch means of the per-sample head mean, minimum and spread before the step.
    pub q_mean: f64,
    pub q_min: f64,
    pub q_std: f64,
    pub q_abs_max: f64,
}

/// One Adam step on `mean_{k,b} (Q^k(s_b, a_b) − y_b)²`.
pub fn critic_update(critic: &mut MimoQNetwork, adam: &mut AdamState, batch: &Batch, targets: &[f64]) -> Result<CriticStep> {
    critic_update_guarded(critic, adam, batch, targets, None)
}

/// [`critic_update`] that refuses to step once any `|Q|` or `|y|` exceeds `limit`.
pub(crate) fn critic_update_guarded(
    critic: &mut MimoQNetwork,
    adam: &mut AdamState,
    batch: &Batch,
    targets: &[f64],
    limit: Option<f64>,
) -> Result<CriticStep> {
    let b = batch.len();
    if targets.len() != b {
        return Err(Error::Shape(format!("{} targets for {b} transitions", targets.len())));
    }
    let k = critic.ensemble_size();
    let (out, cache) = critic.forward(&batch.state_actions().repeat_rows(k))?;
    let q = out.as_slice();
    let n = (k * b) as f64;
    let mut loss = 0.0;
    let upstream: Vec<f64> = q
        .iter()
        .enumerate()
        .map(|(r, &v)| {
            let e = v - targets[r % b];
            loss += e * e;
            2.0 * e / n
        })
        .collect();
    loss /= n;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("critic loss {loss}")));
    }
    let heads = blocks_to_heads(q, b, k);
    let (mut q_mean, mut q_min, mut q_std) = (0.0, 0.0, 0.0);
    for r in 0..b {
        let s = head_stats(heads.row(r))?;
        q_mean += s.mean;
        q_min += s.min;
        q_std += s.std;
    }
    let q_abs_max = q.iter().chain(targets).fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(limit) = limit {
        if q_abs_max > limit {
            return Err(Error::Diverged(format!("|Q| = {q_abs_max:e} exceeds {limit:e}")));
        }
    }
    let grads = critic.backward(&cache, &upstream)?;
    adam.update_slices(critic.param_slices_mut(), grads.slices())?;
    Ok(CriticStep {
        loss,
        q_mean: q_mean / b as f64,
        q_min: q_min / b as f64,
        q_std: q_std / b as f64,
        q_abs_max,
    })
}

/// Per-step actor diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyStep {
    pub loss: f64,
    /// `log π(a′|s)` of the fresh samples, reused by the temperature step.
    pub sample_log_probs: Vec<f64>,
    /// Mean `log π(a|s)` of the dataset actions.
    pub bc_loglik: f64,
}

/// Gradient of `mean_b[α log π(a′|s) − min_k Q^k(s, a′) − β log π(a|s)]`.
///
/// `a′` is reparameterized; the critic is read-only and its input gradient
/// flows through the minimizing head of each sample only.
pub fn policy_gradients(
    policy: &GaussianPolicy,
    critic: &MimoQNetwork,
    batch: &Batch,
    alpha: f64,
    beta: f64,
    rng: &mut RngStream,
) -> Result<(PolicyGrads, PolicyStep)> {
    let b = batch.len();
    let k = critic.ensemble_size();
    let ds = batch.states.cols();
    let inv_b = 1.0 / b as f64;
    let fwd = policy.forward(&batch.states)?;
    let sample = policy.sample(&fwd, rng);
    let input = batch.states.hcat(&sample.actions)?.repeat_rows(k);
    let (out, cache) = critic.forward(&input)?;
    let mins = row_min(&blocks_to_heads(out.as_slice(), b, k));
    let mut upstream = vec![0.0; k * b];
    for (r, &(km, _)) in mins.iter().enumerate() {
        upstream[km * b + r] = -inv_b;
    }
    let d_input = critic.backward_input(&cache, &upstream)?;
    let da = sample.actions.cols();
    let mut d_action = Matrix::zeros(b, da);
    for (r, &(km, _)) in mins.iter().enumerate() {
        d_action.row_mut(r).copy_from_slice(&d_input.row(km * b + r)[ds..ds + da]);
    }
    let d_logp = vec![alpha * inv_b; b];
    let (mut d_mean, mut d_log_std) = sample_head_grads(&fwd, &sample, &d_action, &d_logp);
    let (bc, bc_mean, bc_log_std) = data_log_prob(&fwd, &batch.actions)?;
    if beta != 0.0 {
        let w = -beta * inv_b;
        for (d, g) in d_mean.as_mut_slice().iter_mut().zip(bc_mean.as_slice()) {
            *d += w * g;
        }
        for (d, g) in d_log_std.as_mut_slice().iter_mut().zip(bc_log_std.as_slice()) {
            *d += w * g;
        }
    }
    let bc_loglik = bc.iter().sum::<f64>() * inv_b;
    let loss = (0..b)
        .map(|r| alpha * sample.log_probs[r] - mins[r].1)
        .sum::<f64>()
        * inv_b
        - beta * bc_loglik;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("policy loss {loss}")));
    }
    let grads = policy.backward(&fwd, &d_mean, &d_log_std)?;
    Ok((
        grads,
        PolicyStep {
            loss,
            sample_log_probs: sample.log_probs,
            bc_loglik,
        },
    ))
}

/// [`policy_gradients`] followed by one Adam step on the actor.
pub fn policy_update(
    policy: &mut GaussianPolicy,
    adam: &mut AdamState,
    critic: &MimoQNetwork,
    batch: &Batch,
    alpha: f64,
    beta: f64,
    rng: &mut RngStream,
) -> Result<PolicyStep> {
    let (grads, step) = policy_gradients(policy, critic, batch, alpha, beta, rng)?;
    adam.update_slices(policy.param_slices_mut(), grads.slices())?;
    Ok(step)
}

/// One Adam step on `J = −α·mean(log π + target_entropy)` in `log α`.
pub fn alpha_update(log_alpha: &mut f64, adam: &mut AdamState, log_probs: &[f64], target_entropy: f64) -> Result<f64> {
    if log_probs.is_empty() {
        return Err(Error::InvalidArgument("temperature step needs log-probabilities".into()));
    }
    let gap = log_probs.iter().map(|l| l + target_entropy).sum::<f64>() / log_probs.len() as f64;
    let grad = -log_alpha.exp() * gap;
    adam.update_slices(vec![std::slice::from_mut(log_alpha)], vec![&[grad]])?;
    Ok(*log_alpha)
}

/// `θ⁻ ← (1 − τ)θ⁻ + τθ`.
pub fn soft_update(target: &mut MimoQNetwork, online: &MimoQNetwork, tau: f64) -> Result<()> {
    target.soft_update_from(online, tau)
}
