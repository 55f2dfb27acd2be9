//! Plain fully-connected networks with hand-written backprop.
//!
//! Used for the actor and as the dense baseline in the ensemble benchmark.

use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};
use crate::rank_one::{realize_member_weight, MimoQNetwork};

pub use crate::rank_one::Activation;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn init(m: usize, n: usize, activation: Activation, rng: &mut RngStream) -> Self {
        let bound = 1.0 / (m as f64).sqrt();
        let w = (0..m * n).map(|_| rng.uniform_range(-bound, bound)).collect();
        DenseLayer {
            weight: Matrix::from_vec(m, n, w).expect("sized above"),
            bias: vec![0.0; n],
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.cols()
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut z = x.matmul(&self.weight).expect("caller checks widths");
        for r in 0..z.rows() {
            for (v, b) in z.row_mut(r).iter_mut().zip(&self.bias) {
                *v = self.activation.apply(*v + b);
            }
        }
        z
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNet {
    layers: Vec<DenseLayer>,
}

#[derive(Clone, Debug)]
pub struct DenseCache {
    inputs: Vec<Matrix>,
    output: Matrix,
}

impl DenseCache {
    pub fn output(&self) -> &Matrix {
        &self.output
    }
}

/// Gradients laid out like [`DenseNet::param_slices`].
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrads {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

impl DenseGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

impl DenseNet {
    /// `dims = [input, ..., output]`; hidden layers use `hidden`, the last uses `output`.
    pub fn new(dims: &[usize], hidden: Activation, output: Activation, rng: &mut RngStream) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {dims:?}")));
        }
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, p)| DenseLayer::init(p[0], p[1], if i == last { output } else { hidden }, rng))
            .collect();
        Ok(DenseNet { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("dense net needs a layer".into()));
        }
        for (i, p) in layers.windows(2).enumerate() {
            if p[0].output_dim() != p[1].input_dim() {
                return Err(Error::Shape(format!("layer {i} -> {} does not chain", i + 1)));
            }
        }
        for l in &layers {
            if l.bias.len() != l.output_dim() {
                return Err(Error::Shape("bias length differs from layer width".into()));
            }
        }
        Ok(DenseNet { layers })
    }

    /// Member `k` of a rank-one ensemble as a standalone dense network.
    pub fn from_member(net: &MimoQNetwork, k: usize) -> Result<Self> {
        let layers = net
            .layers()
            .iter()
            .map(|l| {
                Ok(DenseLayer {
                    weight: realize_member_weight(l, k)?,
                    bias: l.bias(k).to_vec(),
                    activation: l.activation(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNet::from_layers(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.input_dim()];
        d.extend(self.layers.iter().map(DenseLayer::output_dim));
        d
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.as_slice().len() + l.bias.len()).sum()
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network takes {}",
                x.cols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let mut h = self.layers[0].forward(x);
        for l in &self.layers[1..] {
            h = l.forward(&h);
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Matrix) -> Result<DenseCache> {
        self.check(x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for l in &self.layers {
            let next = l.forward(&h);
            inputs.push(h);
            h = next;
        }
        Ok(DenseCache { inputs, output: h })
    }

    /// Backprop of `grad_out = ∂L/∂output`; returns parameter and input gradients.
    pub fn backward(&self, cache: &DenseCache, grad_out: &Matrix) -> Result<(DenseGrads, Matrix)> {
        if grad_out.shape() != cache.output.shape() || cache.inputs.len() != self.layers.len() {
            return Err(Error::Shape("gradient does not match cached forward".into()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.clone();
        let mut out = &cache.output;
        for (li, l) in self.layers.iter().enumerate().rev() {
            if l.activation == Activation::Relu {
                for (gv, y) in g.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    if *y <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let x = &cache.inputs[li];
            let dw = x.t_matmul(&g)?;
            let mut db = vec![0.0; l.output_dim()];
            for r in 0..g.rows() {
                for (d, v) in db.iter_mut().zip(g.row(r)) {
                    *d += v;
                }
            }
            grads.push((dw, db));
            g = g.matmul_t(&l.weight)?;
            out = x;
        }
        grads.reverse();
        Ok((DenseGrads { layers: grads }, g))
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
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
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_grad, max_relative_error};
    use crate::rank_one::init_network;

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = RngStream::new(4);
        let mut net = DenseNet::new(&[3, 6, 5, 2], Activation::Relu, Activation::Identity, &mut rng).unwrap();
        let jitter: Vec<f64> = net.flat_params().iter().map(|p| p + 0.1 * rng.normal()).collect();
        net.set_flat_params(&jitter).unwrap();
        let x = Matrix::from_vec(4, 3, (0..12).map(|_| rng.normal()).collect()).unwrap();
        let up = Matrix::from_vec(4, 2, (0..8).map(|_| rng.normal()).collect()).unwrap();
        let loss = |n: &DenseNet, x: &Matrix| -> f64 {
            n.predict(x).unwrap().as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum()
        };
        let cache = net.forward(&x).unwrap();
        let (g, dx) = net.backward(&cache, &up).unwrap();
        let numeric = finite_diff_grad(
            |p| {
                let mut probe = net.clone();
                probe.set_flat_params(p).unwrap();
                loss(&probe, &x)
            },
            &net.flat_params(),
            1e-5,
        )
        .unwrap();
        assert!(max_relative_error(&g.flatten(), &numeric, 1e-6) <= 1e-5);
        let numeric_x = finite_diff_grad(
            |p| loss(&net, &Matrix::from_vec(4, 3, p.to_vec()).unwrap()),
            x.as_slice(),
            1e-5,
        )
        .unwrap();
        assert!(max_relative_error(dx.as_slice(), &numeric_x, 1e-6) <= 1e-5);
    }

    #[test]
    fn member_materialization_matches_ensemble_head() {
        let net = init_network(&[4, 7, 5, 1], 3, &mut RngStream::new(1)).unwrap();
        let x = Matrix::from_vec(2, 4, vec![0.1, -0.3, 0.5, 0.9, -1.0, 0.2, 0.0, 0.4]).unwrap();
        let heads = net.q_heads(&x).unwrap();
        for k in 0..3 {
            let dense = DenseNet::from_member(&net, k).unwrap();
            let y = dense.predict(&x).unwrap();
            for b in 0..2 {
                assert!((y[(b, 0)] - heads[(b, k)]).abs() < 1e-12);
            }
        }
    }
}
