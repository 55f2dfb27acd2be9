//! Tanh-squashed diagonal Gaussian actor.
//!
//! A relu trunk feeds two linear heads. The log-std head output is mapped
//! smoothly into `[LOG_STD_MIN, LOG_STD_MAX]`, actions are `tanh(u)` with
//! `u ~ N(mean, std²)`, and densities carry the tanh Jacobian correction.

use std::f64::consts::PI;
use std::path::Path;

use crate::dense::{Activation, DenseCache, DenseGrads, DenseLayer, DenseNet};
use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::rank_one::{Container, POLICY_MAGIC};

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added to `1 − tanh²(u)` inside the log-Jacobian.
pub const SQUASH_EPS: f64 = 1e-6;
/// Dataset actions are clipped to `|a| ≤ 1 − ATANH_EPS` before unsquashing.
pub const ATANH_EPS: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    trunk: DenseNet,
    mean_head: DenseNet,
    log_std_head: DenseNet,
}

/// Head outputs for a batch of states, with everything backprop needs.
#[derive(Clone, Debug)]
pub struct PolicyForward {
    pub mean: Matrix,
    pub log_std: Matrix,
    raw_log_std: Matrix,
    trunk_cache: DenseCache,
    mean_cache: DenseCache,
    log_std_cache: DenseCache,
}

/// Reparameterized samples `a = tanh(mean + std·ε)`.
#[derive(Clone, Debug)]
pub struct PolicySample {
    pub noise: Matrix,
    pub actions: Matrix,
    pub log_probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGrads {
    pub trunk: DenseGrads,
    pub mean_head: DenseGrads,
    pub log_std_head: DenseGrads,
}

impl PolicyGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut s = self.trunk.slices();
        s.extend(self.mean_head.slices());
        s.extend(self.log_std_head.slices());
        s
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

fn squash_log_std(raw: f64) -> f64 {
    LOG_STD_MIN + 0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (raw.tanh() + 1.0)
}

fn squash_log_std_grad(raw: f64) -> f64 {
    let t = raw.tanh();
    0.5 * (LOG_STD_MAX - LOG_STD_MIN) * (1.0 - t * t)
}

/// `−ln(1 − tanh²(u) + ε)` given `a = tanh(u)`.
#[inline]
fn neg_log_jacobian(a: f64) -> f64 {
    -(1.0 - a * a + SQUASH_EPS).ln()
}

/// `∂/∂u` of [`neg_log_jacobian`].
#[inline]
fn neg_log_jacobian_du(a: f64) -> f64 {
    let one_minus = 1.0 - a * a;
    2.0 * a * one_minus / (one_minus + SQUASH_EPS)
}

/// Unsquashes a dataset action component, clipping saturated values.
pub fn unsquash(a: f64) -> f64 {
    a.clamp(-1.0 + ATANH_EPS, 1.0 - ATANH_EPS).atanh()
}

impl GaussianPolicy {
    /// `hidden` are the trunk widths; every trunk layer uses relu.
    pub fn new(state_dim: usize, action_dim: usize, hidden: &[usize], rng: &mut RngStream) -> Result<Self> {
        if state_dim == 0 || action_dim == 0 || hidden.is_empty() {
            return Err(Error::Config(format!(
                "policy needs state/action dims and at least one hidden layer (got {state_dim}, {action_dim}, {hidden:?})"
            )));
        }
        let mut dims = vec![state_dim];
        dims.extend_from_slice(hidden);
        let trunk = DenseNet::new(&dims, Activation::Relu, Activation::Relu, rng)?;
        let h = *hidden.last().unwrap();
        let mean_head = DenseNet::new(&[h, action_dim], Activation::Identity, Activation::Identity, rng)?;
        let log_std_head = DenseNet::new(&[h, action_dim], Activation::Identity, Activation::Identity, rng)?;
        Ok(GaussianPolicy {
            trunk,
            mean_head,
            log_std_head,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.trunk.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mean_head.output_dim()
    }

    pub fn hidden_dims(&self) -> Vec<usize> {
        self.trunk.dims()[1..].to_vec()
    }

    pub fn mean_head_mut(&mut self) -> &mut DenseLayer {
        &mut self.mean_head.layers_mut()[0]
    }

    pub fn log_std_head_mut(&mut self) -> &mut DenseLayer {
        &mut self.log_std_head.layers_mut()[0]
    }

    pub fn num_params(&self) -> usize {
        self.trunk.num_params() + self.mean_head.num_params() + self.log_std_head.num_params()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut s = self.trunk.param_slices();
        s.extend(self.mean_head.param_slices());
        s.extend(self.log_std_head.param_slices());
        s
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut s = self.trunk.param_slices_mut();
        s.extend(self.mean_head.param_slices_mut());
        s.extend(self.log_std_head.param_slices_mut());
        s
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!("{} values for {} parameters", flat.len(), self.num_params())));
        }
        let mut offset = 0;
        for s in self.param_slices_mut() {
            let n = s.len();
            s.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    fn check_states(&self, states: &Matrix) -> Result<()> {
        if states.cols() != self.state_dim() {
            return Err(Error::Shape(format!(
                "state has {} components, policy takes {}",
                states.cols(),
                self.state_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, states: &Matrix) -> Result<PolicyForward> {
        self.check_states(states)?;
        let trunk_cache = self.trunk.forward(states)?;
        let hidden = trunk_cache.output();
        let mean_cache = self.mean_head.forward(hidden)?;
        let log_std_cache = self.log_std_head.forward(hidden)?;
        let raw_log_std = log_std_cache.output().clone();
        let mut log_std = raw_log_std.clone();
        log_std.as_mut_slice().iter_mut().for_each(|v| *v = squash_log_std(*v));
        Ok(PolicyForward {
            mean: mean_cache.output().clone(),
            log_std,
            raw_log_std,
            trunk_cache,
            mean_cache,
            log_std_cache,
        })
    }

    /// Draws fresh noise and returns reparameterized samples for each row.
    pub fn sample(&self, fwd: &PolicyForward, rng: &mut RngStream) -> PolicySample {
        let (rows, dim) = fwd.mean.shape();
        let noise = Matrix::from_vec(rows, dim, (0..rows * dim).map(|_| rng.normal()).collect())
            .expect("sized above");
        self.sample_with_noise(fwd, noise)
    }

    pub fn sample_with_noise(&self, fwd: &PolicyForward, noise: Matrix) -> PolicySample {
        let (rows, dim) = fwd.mean.shape();
        let mut actions = Matrix::zeros(rows, dim);
        let mut log_probs = Vec::with_capacity(rows);
        for r in 0..rows {
            let mut lp = 0.0;
            for j in 0..dim {
                let e = noise[(r, j)];
                let ls = fwd.log_std[(r, j)];
                let u = fwd.mean[(r, j)] + ls.exp() * e;
                let a = u.tanh();
                actions[(r, j)] = a;
                lp += -0.5 * e * e - ls - HALF_LN_2PI + neg_log_jacobian(a);
            }
            log_probs.push(lp);
        }
        PolicySample {
            noise,
            actions,
            log_probs,
        }
    }

    /// Single-state convenience wrapper around [`forward`](Self::forward) + [`sample`](Self::sample).
    pub fn sample_action(&self, state: &[f64], rng: &mut RngStream) -> Result<(Vec<f64>, f64)> {
        let fwd = self.forward(&Matrix::from_vec(1, state.len(), state.to_vec())?)?;
        let s = self.sample(&fwd, rng);
        Ok((s.actions.row(0).to_vec(), s.log_probs[0]))
    }

    /// Log-density of given actions under the rows of `fwd`.
    pub fn log_prob_batch(&self, fwd: &PolicyForward, actions: &Matrix) -> Result<Vec<f64>> {
        Ok(data_log_prob(fwd, actions)?.0)
    }

    pub fn log_prob(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        if action.len() != self.action_dim() {
            return Err(Error::Shape(format!(
                "action has {} components, policy emits {}",
                action.len(),
                self.action_dim()
            )));
        }
        let fwd = self.forward(&Matrix::from_vec(1, state.len(), state.to_vec())?)?;
        let a = Matrix::from_vec(1, action.len(), action.to_vec())?;
        Ok(self.log_prob_batch(&fwd, &a)?[0])
    }

    /// `tanh(mean)`.
    pub fn deterministic_action(&self, state: &[f64]) -> Result<Vec<f64>> {
        let fwd = self.forward(&Matrix::from_vec(1, state.len(), state.to_vec())?)?;
        Ok(fwd.mean.row(0).iter().map(|m| m.tanh()).collect())
    }

    pub fn deterministic_actions(&self, states: &Matrix) -> Result<Matrix> {
        let mut m = self.forward(states)?.mean;
        m.as_mut_slice().iter_mut().for_each(|v| *v = v.tanh());
        Ok(m)
    }

    /// Backprop from head-level gradients `∂L/∂mean` and `∂L/∂log_std`
    /// (log-std after squashing) into every policy parameter.
    pub fn backward(&self, fwd: &PolicyForward, d_mean: &Matrix, d_log_std: &Matrix) -> Result<PolicyGrads> {
        if d_mean.shape() != fwd.mean.shape() || d_log_std.shape() != fwd.log_std.shape() {
            return Err(Error::Shape("head gradients do not match forward".into()));
        }
        let mut d_raw = d_log_std.clone();
        for (d, raw) in d_raw.as_mut_slice().iter_mut().zip(fwd.raw_log_std.as_slice()) {
            *d *= squash_log_std_grad(*raw);
        }
        let (mean_grads, dh_mean) = self.mean_head.backward(&fwd.mean_cache, d_mean)?;
        let (log_std_grads, dh_log_std) = self.log_std_head.backward(&fwd.log_std_cache, &d_raw)?;
        let mut dh = dh_mean;
        for (a, b) in dh.as_mut_slice().iter_mut().zip(dh_log_std.as_slice()) {
            *a += b;
        }
        let (trunk_grads, _) = self.trunk.backward(&fwd.trunk_cache, &dh)?;
        Ok(PolicyGrads {
            trunk: trunk_grads,
            mean_head: mean_grads,
            log_std_head: log_std_grads,
        })
    }

    pub fn to_container(&self) -> Container {
        let mut dims = vec![self.state_dim()];
        dims.extend(self.hidden_dims());
        dims.push(self.action_dim());
        Container {
            magic: POLICY_MAGIC,
            dims,
            members: 1,
            params: self.flat_params(),
        }
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        if c.magic != POLICY_MAGIC || c.dims.len() < 3 || c.members != 1 {
            return Err(Error::Checkpoint("not a policy checkpoint".into()));
        }
        let n = c.dims.len();
        let mut policy = GaussianPolicy::new(c.dims[0], c.dims[n - 1], &c.dims[1..n - 1], &mut RngStream::new(0))
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        if c.params.len() != policy.num_params() {
            return Err(Error::Checkpoint(format!(
                "{} parameters stored, header implies {}",
                c.params.len(),
                policy.num_params()
            )));
        }
        policy.set_flat_params(&c.params)?;
        Ok(policy)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container().save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_container(&Container::load(path, POLICY_MAGIC)?)
    }
}

/// Head gradients of `L = Σ_r [d_logp_r · log π(a_r) + Σ_j d_action_rj · a_rj]`
/// for reparameterized samples `a = tanh(mean + std·ε)` with `ε` held fixed.
pub fn sample_head_grads(
    fwd: &PolicyForward,
    sample: &PolicySample,
    d_action: &Matrix,
    d_logp: &[f64],
) -> (Matrix, Matrix) {
    let (rows, dim) = fwd.mean.shape();
    let mut d_mean = Matrix::zeros(rows, dim);
    let mut d_log_std = Matrix::zeros(rows, dim);
    for r in 0..rows {
        for j in 0..dim {
            let a = sample.actions[(r, j)];
            let e = sample.noise[(r, j)];
            let std = fwd.log_std[(r, j)].exp();
            let du = d_action[(r, j)] * (1.0 - a * a) + d_logp[r] * neg_log_jacobian_du(a);
            d_mean[(r, j)] = du;
            d_log_std[(r, j)] = du * std * e - d_logp[r];
        }
    }
    (d_mean, d_log_std)
}

/// Log-density of fixed actions plus its gradients with respect to the heads.
///
/// Returns `(log π(a_r | s_r), ∂/∂mean, ∂/∂log_std)`.
pub fn data_log_prob(fwd: &PolicyForward, actions: &Matrix) -> Result<(Vec<f64>, Matrix, Matrix)> {
    if actions.shape() != fwd.mean.shape() {
        return Err(Error::Shape(format!(
            "actions {:?} vs policy output {:?}",
            actions.shape(),
            fwd.mean.shape()
        )));
    }
    if let Some(a) = actions.as_slice().iter().find(|a| !(a.abs() <= 1.0)) {
        return Err(Error::InvalidArgument(format!("action component {a} outside [-1, 1]")));
    }
    let (rows, dim) = actions.shape();
    let mut lps = Vec::with_capacity(rows);
    let mut d_mean = Matrix::zeros(rows, dim);
    let mut d_log_std = Matrix::zeros(rows, dim);
    for r in 0..rows {
        let mut lp = 0.0;
        for j in 0..dim {
            let a = actions[(r, j)].clamp(-1.0 + ATANH_EPS, 1.0 - ATANH_EPS);
            let u = a.atanh();
            let ls = fwd.log_std[(r, j)];
            let z = (u - fwd.mean[(r, j)]) * (-ls).exp();
            lp += -0.5 * z * z - ls - HALF_LN_2PI + neg_log_jacobian(a);
            d_mean[(r, j)] = z * (-ls).exp();
            d_log_std[(r, j)] = z * z - 1.0;
        }
        lps.push(lp);
    }
    Ok((lps, d_mean, d_log_std))
}

/// Differential entropy of the pre-squash Gaussian, per row.
pub fn gaussian_entropy(fwd: &PolicyForward) -> Vec<f64> {
    let dim = fwd.log_std.cols() as f64;
    (0..fwd.log_std.rows())
        .map(|r| fwd.log_std.row(r).iter().sum::<f64>() + dim * 0.5 * (1.0 + (2.0 * PI).ln()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, max_relative_error};

    fn jittered(state_dim: usize, action_dim: usize, seed: u64) -> GaussianPolicy {
        let mut rng = RngStream::new(seed);
        let mut p = GaussianPolicy::new(state_dim, action_dim, &[8, 6], &mut rng).unwrap();
        let flat: Vec<f64> = p.flat_params().iter().map(|w| w + 0.2 * rng.normal()).collect();
        p.set_flat_params(&flat).unwrap();
        p
    }

    fn states(rows: usize, dim: usize, seed: u64) -> Matrix {
        let mut rng = RngStream::new(seed);
        Matrix::from_vec(rows, dim, (0..rows * dim).map(|_| rng.normal()).collect()).unwrap()
    }

    #[test]
    fn sampled_actions_inside_box_and_log_std_clamped() {
        let mut p = jittered(3, 2, 1);
        // Push the log-std head far out on both sides.
        p.log_std_head_mut().bias = vec![50.0, -50.0];
        let s = states(64, 3, 2);
        let fwd = p.forward(&s).unwrap();
        assert!(fwd.log_std.as_slice().iter().all(|&l| (LOG_STD_MIN..=LOG_STD_MAX).contains(&l)));
        let sample = p.sample(&fwd, &mut RngStream::new(3));
        assert!(sample.actions.as_slice().iter().all(|a| a.abs() <= 1.0));
        assert!(sample.log_probs.iter().all(|l| l.is_finite()));
    }

    #[test]
    fn sample_round_trips_through_log_prob() {
        let p = jittered(3, 2, 4);
        let mut rng = RngStream::new(5);
        for _ in 0..20 {
            let state: Vec<f64> = (0..3).map(|_| rng.normal()).collect();
            let (a, lp) = p.sample_action(&state, &mut rng).unwrap();
            let back = p.log_prob(&state, &a).unwrap();
            assert!((back - lp).abs() < 1e-9, "{back} vs {lp}");
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let p = jittered(2, 1, 6);
        let a = p.sample_action(&[0.3, -0.2], &mut RngStream::new(9)).unwrap();
        let b = p.sample_action(&[0.3, -0.2], &mut RngStream::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn narrow_limit_is_deterministic_action() {
        let mut p = jittered(2, 1, 7);
        p.log_std_head_mut().bias = vec![-1e3];
        p.log_std_head_mut().weight.as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
        let state = [0.4, 0.1];
        let (a, lp) = p.sample_action(&state, &mut RngStream::new(1)).unwrap();
        let det = p.deterministic_action(&state).unwrap();
        assert!((a[0] - det[0]).abs() < 0.05);
        assert!(lp > 3.0, "log prob {lp}");
    }

    #[test]
    fn zero_heads_give_zero_action() {
        let mut p = jittered(3, 2, 8);
        let head = p.mean_head_mut();
        head.weight.as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
        head.bias.iter_mut().for_each(|b| *b = 0.0);
        assert_eq!(p.deterministic_action(&[1.0, 2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn deterministic_action_bounded() {
        let mut p = jittered(2, 3, 10);
        p.mean_head_mut().bias = vec![30.0, -30.0, 0.5];
        let a = p.deterministic_action(&[5.0, -5.0]).unwrap();
        assert!(a.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn symmetric_policy_has_symmetric_density() {
        let mut p = jittered(2, 1, 11);
        let head = p.mean_head_mut();
        head.weight.as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
        head.bias = vec![0.0];
        for a in [0.1, 0.5, 0.93, 0.999] {
            let l1 = p.log_prob(&[0.2, 0.7], &[a]).unwrap();
            let l2 = p.log_prob(&[0.2, 0.7], &[-a]).unwrap();
            assert!((l1 - l2).abs() <= 1e-12 * l1.abs().max(1.0), "{l1} vs {l2}");
        }
    }

    #[test]
    fn log_prob_rejects_out_of_box_actions() {
        let p = jittered(2, 1, 12);
        assert!(p.log_prob(&[0.0, 0.0], &[1.5]).is_err());
        assert!(p.log_prob(&[0.0, 0.0], &[1.0]).unwrap().is_finite());
        assert!(p.log_prob(&[0.0, 0.0], &[0.1, 0.2]).is_err());
    }

    #[test]
    fn density_integrates_to_one() {
        for seed in 0..6 {
            let p = jittered(2, 1, 100 + seed);
            let state = [0.3 * seed as f64 - 0.5, 0.2];
            let fwd = p.forward(&Matrix::from_vec(1, 2, state.to_vec()).unwrap()).unwrap();
            let n = 400_000;
            let h = 2.0 / n as f64;
            let grid = Matrix::from_vec(n, 1, (0..n).map(|i| -1.0 + (i as f64 + 0.5) * h).collect()).unwrap();
            let heads = PolicyForward {
                mean: Matrix::filled(n, 1, fwd.mean[(0, 0)]),
                log_std: Matrix::filled(n, 1, fwd.log_std[(0, 0)]),
                ..fwd.clone()
            };
            let total: f64 = data_log_prob(&heads, &grid).unwrap().0.iter().map(|l| l.exp() * h).sum();
            assert!((total - 1.0).abs() < 1e-3, "seed {seed}: {total}");
        }
    }

    #[test]
    fn reparameterized_gradients_match_finite_differences() {
        let p = jittered(3, 2, 20);
        let s = states(5, 3, 21);
        let noise = states(5, 2, 22);
        let mut rng = RngStream::new(23);
        let w_action = Matrix::from_vec(5, 2, (0..10).map(|_| rng.normal()).collect()).unwrap();
        let w_logp: Vec<f64> = (0..5).map(|_| rng.normal()).collect();
        let loss = |pol: &GaussianPolicy| {
            let fwd = pol.forward(&s).unwrap();
            let smp = pol.sample_with_noise(&fwd, noise.clone());
            let a: f64 = smp.actions.as_slice().iter().zip(w_action.as_slice()).map(|(x, y)| x * y).sum();
            let l: f64 = smp.log_probs.iter().zip(&w_logp).map(|(x, y)| x * y).sum();
            a + l
        };
        let fwd = p.forward(&s).unwrap();
        let smp = p.sample_with_noise(&fwd, noise.clone());
        let (dm, dls) = sample_head_grads(&fwd, &smp, &w_action, &w_logp);
        let analytic = p.backward(&fwd, &dm, &dls).unwrap().flatten();
        let numeric = finite_diff_grad(
            |flat| {
                let mut probe = p.clone();
                probe.set_flat_params(flat).unwrap();
                loss(&probe)
            },
            &p.flat_params(),
            1e-5,
        )
        .unwrap();
        let err = max_relative_error(&analytic, &numeric, 1e-6);
        assert!(err <= 1e-5, "rel err {err:e}");
    }

    #[test]
    fn data_log_prob_gradients_match_finite_differences() {
        let p = jittered(3, 2, 30);
        let s = states(4, 3, 31);
        let actions = Matrix::from_vec(4, 2, vec![0.3, -0.8, 0.99, 0.0, -0.5, 0.5, 1.0, -1.0]).unwrap();
        let fwd = p.forward(&s).unwrap();
        let (_, dm, dls) = data_log_prob(&fwd, &actions).unwrap();
        let analytic = p.backward(&fwd, &dm, &dls).unwrap().flatten();
        let numeric = finite_diff_grad(
            |flat| {
                let mut probe = p.clone();
                probe.set_flat_params(flat).unwrap();
                let f = probe.forward(&s).unwrap();
                probe.log_prob_batch(&f, &actions).unwrap().iter().sum()
            },
            &p.flat_params(),
            1e-5,
        )
        .unwrap();
        let err = max_relative_error(&analytic, &numeric, 1e-6);
        assert!(err <= 1e-5, "rel err {err:e}");
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = jittered(3, 2, 40);
        let c = p.to_container();
        assert_eq!(c.dims, vec![3, 8, 6, 2]);
        let bytes = c.encode();
        assert_eq!(&bytes[..4], b"R1PI");
        let back = GaussianPolicy::from_container(&Container::decode(&bytes, POLICY_MAGIC).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(Container::decode(&bytes, crate::rank_one::CRITIC_MAGIC).is_err());
    }
}
