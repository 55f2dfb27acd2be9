use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }
}

/// One rank-one ensemble layer.
///
/// Member `k` realizes the weight `W ∘ (v_k s_kᵀ)` where `W` (m×n) is shared
/// and `v_k` (length m), `s_k` (length n) are the member's fast weights. Each
/// member also owns a bias `b_k` (length n).
#[derive(Clone, Debug, PartialEq)]
pub struct RankOneLayer {
    pub(crate) weight: Matrix,
    /// Row `k` is `v_k`.
    pub(crate) fast_in: Matrix,
    /// Row `k` is `s_k`.
    pub(crate) fast_out: Matrix,
    /// Row `k` is `b_k`.
    pub(crate) bias: Matrix,
    pub(crate) activation: Activation,
}

impl RankOneLayer {
    pub fn from_parts(
        weight: Matrix,
        fast_in: Matrix,
        fast_out: Matrix,
        bias: Matrix,
        activation: Activation,
    ) -> Result<Self> {
        let (m, n) = weight.shape();
        let k = fast_in.rows();
        if k == 0 {
            return Err(Error::Config("ensemble size must be at least 1".into()));
        }
        if fast_in.cols() != m {
            return Err(Error::Shape(format!("fast_in has {} cols, W has {m} rows", fast_in.cols())));
        }
        if fast_out.shape() != (k, n) {
            return Err(Error::Shape(format!("fast_out is {:?}, expected ({k}, {n})", fast_out.shape())));
        }
        if bias.shape() != (k, n) {
            return Err(Error::Shape(format!("bias is {:?}, expected ({k}, {n})", bias.shape())));
        }
        Ok(RankOneLayer {
            weight,
            fast_in,
            fast_out,
            bias,
            activation,
        })
    }

    /// Shared weight uniform on ±1/√m, random-sign fast weights, zero biases.
    pub fn init(m: usize, n: usize, k: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (m as f64).sqrt();
        let w: Vec<f64> = (0..m * n).map(|_| rng.uniform_range(-bound, bound)).collect();
        let v: Vec<f64> = (0..k * m).map(|_| rng.sign()).collect();
        let s: Vec<f64> = (0..k * n).map(|_| rng.sign()).collect();
        RankOneLayer {
            weight: Matrix::from_vec(m, n, w).expect("sized above"),
            fast_in: Matrix::from_vec(k, m, v).expect("sized above"),
            fast_out: Matrix::from_vec(k, n, s).expect("sized above"),
            bias: Matrix::zeros(k, n),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn ensemble_size(&self) -> usize {
        self.fast_in.rows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn fast_in(&self, k: usize) -> &[f64] {
        self.fast_in.row(k)
    }

    pub fn fast_out(&self, k: usize) -> &[f64] {
        self.fast_out.row(k)
    }

    pub fn bias(&self, k: usize) -> &[f64] {
        self.bias.row(k)
    }

    pub fn weight_mut(&mut self) -> &mut Matrix {
        &mut self.weight
    }

    pub fn fast_in_mut(&mut self, k: usize) -> &mut [f64] {
        self.fast_in.row_mut(k)
    }

    pub fn fast_out_mut(&mut self, k: usize) -> &mut [f64] {
        self.fast_out.row_mut(k)
    }

    pub fn bias_mut(&mut self, k: usize) -> &mut [f64] {
        self.bias.row_mut(k)
    }

    /// Parameter slices in checkpoint order: W, v₁…v_K, s₁…s_K, b₁…b_K.
    pub(crate) fn param_slices(&self) -> [&[f64]; 4] {
        [
            self.weight.as_slice(),
            self.fast_in.as_slice(),
            self.fast_out.as_slice(),
            self.bias.as_slice(),
        ]
    }

    pub(crate) fn param_slices_mut(&mut self) -> [&mut [f64]; 4] {
        [
            self.weight.as_mut_slice(),
            self.fast_in.as_mut_slice(),
            self.fast_out.as_mut_slice(),
            self.bias.as_mut_slice(),
        ]
    }
}

/// `W ∘ (v_k s_kᵀ)`: the dense weight member `k` effectively uses.
pub fn realize_member_weight(layer: &RankOneLayer, k: usize) -> Result<Matrix> {
    let members = layer.ensemble_size();
    if k >= members {
        return Err(Error::Index { index: k, len: members });
    }
    let (m, n) = layer.weight.shape();
    let v = layer.fast_in(k);
    let s = layer.fast_out(k);
    let mut out = layer.weight.clone();
    for i in 0..m {
        for (j, w) in out.row_mut(i).iter_mut().enumerate().take(n) {
            *w *= v[i] * s[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer(w: Matrix, v: Vec<Vec<f64>>, s: Vec<Vec<f64>>) -> RankOneLayer {
        let k = v.len();
        let n = w.cols();
        RankOneLayer::from_parts(
            w,
            Matrix::from_rows(&v).unwrap(),
            Matrix::from_rows(&s).unwrap(),
            Matrix::zeros(k, n),
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn unit_fast_weights_recover_shared_weight() {
        let w = Matrix::from_rows(&[vec![0.5, -2.0, 1.0], vec![3.0, 0.25, -1.0]]).unwrap();
        let l = layer(w.clone(), vec![vec![1.0, 1.0]], vec![vec![1.0, 1.0, 1.0]]);
        assert_eq!(realize_member_weight(&l, 0).unwrap(), w);
    }

    #[test]
    fn sign_flip_of_second_row() {
        let w = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let l = layer(w, vec![vec![1.0, -1.0]], vec![vec![1.0, 1.0]]);
        let expected = Matrix::from_rows(&[vec![1.0, 2.0], vec![-3.0, -4.0]]).unwrap();
        assert_eq!(realize_member_weight(&l, 0).unwrap(), expected);
    }

    #[test]
    fn out_of_range_member() {
        let l = RankOneLayer::init(3, 2, 2, Activation::Relu, &mut RngStream::new(0));
        assert!(matches!(
            realize_member_weight(&l, 2),
            Err(Error::Index { index: 2, len: 2 })
        ));
    }

    #[test]
    fn random_layer_matches_elementwise_oracle() {
        let mut rng = RngStream::new(3);
        let mut l = RankOneLayer::init(4, 5, 3, Activation::Relu, &mut rng);
        // Real-valued fast weights exercise more than sign flips.
        for k in 0..3 {
            for v in l.fast_in_mut(k) {
                *v = rng.uniform_range(-2.0, 2.0);
            }
            for s in l.fast_out_mut(k) {
                *s = rng.uniform_range(-2.0, 2.0);
            }
        }
        for k in 0..3 {
            let realized = realize_member_weight(&l, k).unwrap();
            let rank_one = Matrix::outer(l.fast_in(k), l.fast_out(k));
            let oracle = l.weight().hadamard(&rank_one).unwrap();
            assert_eq!(realized, oracle);
            // Row i of W_k is v_i·s ∘ W_i and column j is s_j·v ∘ W_j, so
            // nonzero fast weights preserve the support pattern of W.
            for (a, b) in realized.as_slice().iter().zip(l.weight().as_slice()) {
                assert_eq!(*a == 0.0, *b == 0.0);
            }
        }
    }

    fn numerical_rank(m: &Matrix) -> usize {
        let mut a = m.clone();
        let (rows, cols) = a.shape();
        let mut rank = 0;
        for c in 0..cols {
            let pivot = (rank..rows).max_by(|&x, &y| a[(x, c)].abs().total_cmp(&a[(y, c)].abs()));
            let Some(p) = pivot else { break };
            if a[(p, c)].abs() < 1e-10 {
                continue;
            }
            for j in 0..cols {
                let tmp = a[(rank, j)];
                a[(rank, j)] = a[(p, j)];
                a[(p, j)] = tmp;
            }
            for r in rank + 1..rows {
                let f = a[(r, c)] / a[(rank, c)];
                for j in 0..cols {
                    a[(r, j)] -= f * a[(rank, j)];
                }
            }
            rank += 1;
        }
        rank
    }

    #[test]
    fn realized_rank_never_exceeds_shared_rank() {
        let mut rng = RngStream::new(8);
        let mut l = RankOneLayer::init(4, 5, 3, Activation::Relu, &mut rng);
        let u: Vec<Vec<f64>> = (0..2).map(|_| (0..4).map(|_| rng.normal()).collect()).collect();
        let w: Vec<Vec<f64>> = (0..2).map(|_| (0..5).map(|_| rng.normal()).collect()).collect();
        let mut shared = Matrix::outer(&u[0], &w[0]);
        let second = Matrix::outer(&u[1], &w[1]);
        for (a, b) in shared.as_mut_slice().iter_mut().zip(second.as_slice()) {
            *a += b;
        }
        *l.weight_mut() = shared;
        assert_eq!(numerical_rank(l.weight()), 2);
        for k in 0..3 {
            assert!(numerical_rank(&realize_member_weight(&l, k).unwrap()) <= 2);
        }
    }

    #[test]
    fn init_fast_weights_are_signs() {
        let l = RankOneLayer::init(6, 7, 4, Activation::Relu, &mut RngStream::new(1));
        let bound = 1.0 / 6f64.sqrt();
        assert!(l.weight().as_slice().iter().all(|w| w.abs() <= bound));
        assert!(l.fast_in.as_slice().iter().all(|v| v.abs() == 1.0));
        assert!(l.fast_out.as_slice().iter().all(|v| v.abs() == 1.0));
        assert!(l.bias.as_slice().iter().all(|b| *b == 0.0));
    }
}
