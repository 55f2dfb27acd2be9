//! Ensemble-size sweep and the entropy × likelihood component grid.

use std::fmt::Write as _;

use crate::envs::OfflineDataset;
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::offline_rl::{evaluate, policy_value, train, PackedDataset, TrainError, TrainerConfig};

pub const K_SWEEP: [usize; 5] = [2, 5, 10, 15, 20];

pub const K_SWEEP_HEADER: &str = "k,raw_return,normalized_score,avg_q_min,avg_q_mean";
pub const COMPONENTS_HEADER: &str = "entropy,likelihood,raw_return,normalized_score,avg_q_min,avg_q_mean";

#[derive(Clone, Debug, PartialEq)]
pub struct AblationCell {
    pub raw_return: f64,
    pub normalized_score: f64,
    /// Dataset average of `min_k Q^k(s, π(s))`.
    pub avg_q_min: f64,
    pub avg_q_mean: f64,
    /// Set when training aborted; the remaining fields are then NaN.
    pub failure: Option<String>,
}

impl AblationCell {
    fn failed(msg: String) -> Self {
        AblationCell {
            raw_return: f64::NAN,
            normalized_score: f64::NAN,
            avg_q_min: f64::NAN,
            avg_q_mean: f64::NAN,
            failure: Some(msg),
        }
    }
}

/// Trains one configuration and scores the final policy.
pub fn run_cell(config: &TrainerConfig, dataset: &OfflineDataset, eval_episodes: usize) -> Result<AblationCell> {
    let (state, _) = match train(config, dataset) {
        Ok(r) => r,
        Err(TrainError::Diverged(d)) => return Ok(AblationCell::failed(d.reason)),
        Err(TrainError::Invalid(e)) => return Err(e),
    };
    let states = PackedDataset::new(dataset)?.all_states();
    let (avg_q_min, avg_q_mean) = policy_value(&state.critic, &state.policy, &states)?;
    let eval = evaluate(&state.policy, dataset.env, eval_episodes, &mut RngStream::new(config.seed).fork(5))?;
    Ok(AblationCell {
        raw_return: eval.raw,
        normalized_score: dataset.normalize(eval.raw),
        avg_q_min,
        avg_q_mean,
        failure: None,
    })
}

/// One cell per `K`, with the divergence guard off.
pub fn k_sweep(
    base: &TrainerConfig,
    dataset: &OfflineDataset,
    ks: &[usize],
    eval_episodes: usize,
) -> Result<Vec<(usize, AblationCell)>> {
    ks.iter()
        .map(|&k| {
            let cfg = TrainerConfig {
                ensemble_size: k,
                divergence_threshold: None,
                ..base.clone()
            };
            Ok((k, run_cell(&cfg, dataset, eval_episodes)?))
        })
        .collect()
}

/// The 2 × 2 grid: entropy off fixes `α = 0`, likelihood off sets `β = 0`.
pub fn components(
    base: &TrainerConfig,
    dataset: &OfflineDataset,
    eval_episodes: usize,
) -> Result<Vec<(bool, bool, AblationCell)>> {
    if base.beta <= 0.0 {
        return Err(Error::Config("component grid needs beta > 0 for the likelihood-on cells".into()));
    }
    let mut rows = Vec::with_capacity(4);
    for entropy in [true, false] {
        for likelihood in [true, false] {
            let cfg = TrainerConfig {
                fixed_alpha: if entropy { base.fixed_alpha } else { Some(0.0) },
                beta: if likelihood { base.beta } else { 0.0 },
                ..base.clone()
            };
            rows.push((entropy, likelihood, run_cell(&cfg, dataset, eval_episodes)?));
        }
    }
    Ok(rows)
}

pub fn k_sweep_csv(rows: &[(usize, AblationCell)]) -> String {
    let mut out = String::from(K_SWEEP_HEADER);
    out.push('\n');
    for (k, c) in rows {
        writeln!(
            out,
            "{k},{},{},{},{}",
            c.raw_return, c.normalized_score, c.avg_q_min, c.avg_q_mean
        )
        .unwrap();
    }
    out
}

pub fn components_csv(rows: &[(bool, bool, AblationCell)]) -> String {
    let mut out = String::from(COMPONENTS_HEADER);
    out.push('\n');
    for (e, l, c) in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            if *e { "on" } else { "off" },
            if *l { "on" } else { "off" },
            c.raw_return,
            c.normalized_score,
            c.avg_q_min,
            c.avg_q_mean
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{generate_dataset, EnvKind, Tier};

    fn tiny() -> TrainerConfig {
        TrainerConfig {
            batch_size: 8,
            total_steps: 6,
            critic_hidden: vec![4],
            policy_hidden: vec![4],
            log_every: 3,
            eval_every: 0,
            beta: 1.0,
            ..TrainerConfig::default()
        }
    }

    #[test]
    fn component_grid_has_four_rows() {
        let ds = generate_dataset(EnvKind::Reach1D, Tier::MediumExpert, 200, 0).unwrap();
        let rows = components(&tiny(), &ds, 2).unwrap();
        assert_eq!(rows.len(), 4);
        let csv = components_csv(&rows);
        assert_eq!(csv.lines().count(), 5);
        assert_eq!(csv.lines().next().unwrap(), COMPONENTS_HEADER);
        assert!(components(&TrainerConfig { beta: 0.0, ..tiny() }, &ds, 2).is_err());
    }

    #[test]
    fn k_sweep_rows_ordered_and_populated() {
        let ds = generate_dataset(EnvKind::Reach1D, Tier::MediumExpert, 200, 0).unwrap();
        let rows = k_sweep(&tiny(), &ds, &[2, 5], 2).unwrap();
        assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![2, 5]);
        assert!(rows.iter().all(|(_, c)| c.normalized_score.is_finite() && c.avg_q_min.is_finite()));
        let csv = k_sweep_csv(&rows);
        assert!(csv.lines().skip(1).all(|l| l.split(',').count() == 5));
    }
}
