//! 1-D regression with a rank-one ensemble: head spread inside vs outside the data range.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::numerics::{AdamConfig, AdamState, Matrix, RngStream};
use crate::rank_one::{blocks_to_heads, init_network};
use crate::uncertainty::head_stats;

#[derive(Clone, Debug, PartialEq)]
pub struct RegressConfig {
    pub k: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub n_train: usize,
    pub steps: usize,
    /// Rows per member per step.
    pub batch: usize,
    pub lr: f64,
    pub scale: f64,
    pub noise: f64,
    /// Training inputs are drawn from `[−train_range, train_range]`.
    pub train_range: f64,
    /// Evaluation grid covers `[−grid_range, grid_range]`.
    pub grid_range: f64,
    pub grid_points: usize,
}

impl Default for RegressConfig {
    fn default() -> Self {
        RegressConfig {
            k: 10,
            seed: 0,
            hidden: vec![64, 64],
            n_train: 512,
            steps: 4000,
            batch: 32,
            lr: 1e-3,
            scale: 1.0,
            noise: 0.1,
            train_range: 7.0,
            grid_range: 10.0,
            grid_points: 401,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegressionOutput {
    pub xs: Vec<f64>,
    /// `grid_points × K` head predictions.
    pub heads: Matrix,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl RegressionOutput {
    /// Mean head std over grid points whose `|x|` lies in `[lo, hi]`.
    pub fn mean_std_where(&self, lo: f64, hi: f64) -> f64 {
        let picked: Vec<f64> = self
            .xs
            .iter()
            .zip(&self.std)
            .filter(|(x, _)| (lo..=hi).contains(&x.abs()))
            .map(|(_, s)| *s)
            .collect();
        picked.iter().sum::<f64>() / picked.len() as f64
    }

    /// Mean head std on `|x| ∈ [8, 10]` over mean head std on `|x| ≤ 5`.
    pub fn ood_ratio(&self) -> f64 {
        self.mean_std_where(8.0, 10.0) / self.mean_std_where(0.0, 5.0)
    }

    pub fn to_csv(&self) -> String {
        let k = self.heads.cols();
        let mut out = String::from("x,mean,std");
        for i in 0..k {
            write!(out, ",y_{i}").unwrap();
        }
        out.push('\n');
        for (r, x) in self.xs.iter().enumerate() {
            write!(out, "{x},{},{}", self.mean[r], self.std[r]).unwrap();
            for v in self.heads.row(r) {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Fits every head to `scale·sin(x) + noise` with its own minibatch stream.
pub fn run_regression(config: &RegressConfig) -> Result<RegressionOutput> {
    if config.k == 0 || config.n_train == 0 || config.batch == 0 || config.grid_points < 2 {
        return Err(Error::Config("regression needs K, data, batch and at least two grid points".into()));
    }
    let root = RngStream::new(config.seed);
    let mut data_rng = root.fork(0);
    let xs_train: Vec<f64> = (0..config.n_train)
        .map(|_| data_rng.uniform_range(-config.train_range, config.train_range))
        .collect();
    let ys_train: Vec<f64> = xs_train
        .iter()
        .map(|x| config.scale * x.sin() + config.noise * data_rng.normal())
        .collect();

    let mut dims = vec![1];
    dims.extend_from_slice(&config.hidden);
    dims.push(1);
    let k = config.k;
    let mut net = init_network(&dims, k, &mut root.fork(1))?;
    let mut adam = AdamState::new(net.num_params(), AdamConfig::default().with_learning_rate(config.lr));
    let mut batch_rng = root.fork(2);
    let rows = k * config.batch;
    for _ in 0..config.steps {
        let idx: Vec<usize> = (0..rows).map(|_| batch_rng.below(config.n_train)).collect();
        let x = Matrix::from_vec(rows, 1, idx.iter().map(|&i| xs_train[i]).collect())?;
        let (out, cache) = net.forward(&x)?;
        // Sum of per-head mean squared errors.
        let upstream: Vec<f64> = out
            .as_slice()
            .iter()
            .zip(&idx)
            .map(|(q, &i)| 2.0 * (q - ys_train[i]) / config.batch as f64)
            .collect();
        let grads = net.backward(&cache, &upstream)?;
        adam.update_slices(net.param_slices_mut(), grads.slices())?;
    }

    let n = config.grid_points;
    let step = 2.0 * config.grid_range / (n - 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| -config.grid_range + i as f64 * step).collect();
    let grid = Matrix::from_vec(n, 1, xs.clone())?;
    let heads = blocks_to_heads(net.predict(&grid.repeat_rows(k))?.as_slice(), n, k);
    let mut mean = Vec::with_capacity(n);
    let mut std = Vec::with_capacity(n);
    for r in 0..n {
        let s = head_stats(heads.row(r))?;
        mean.push(s.mean);
        std.push(s.std);
    }
    Ok(RegressionOutput { xs, heads, mean, std })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(k: usize, seed: u64) -> RegressConfig {
        RegressConfig {
            k,
            seed,
            hidden: vec![16, 16],
            n_train: 128,
            steps: 200,
            batch: 16,
            grid_points: 41,
            ..RegressConfig::default()
        }
    }

    #[test]
    fn single_head_has_no_spread() {
        let out = run_regression(&quick(1, 0)).unwrap();
        assert!(out.std.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn deterministic_csv() {
        let a = run_regression(&quick(3, 4)).unwrap().to_csv();
        assert_eq!(a, run_regression(&quick(3, 4)).unwrap().to_csv());
        assert_ne!(a, run_regression(&quick(3, 5)).unwrap().to_csv());
        let header = a.lines().next().unwrap();
        assert_eq!(header, "x,mean,std,y_0,y_1,y_2");
        assert_eq!(a.lines().count(), 42);
    }

    #[test]
    fn grid_spans_range() {
        let out = run_regression(&quick(2, 1)).unwrap();
        assert_eq!(out.xs[0], -10.0);
        assert!((out.xs[40] - 10.0).abs() < 1e-12);
    }
}
