use crate::error::{Error, Result};
use crate::numerics::{Matrix, RngStream};

use super::layer::{realize_member_weight, Activation, RankOneLayer};

/// K-member Q ensemble built from stacked rank-one layers.
///
/// Batches are laid out in contiguous member blocks: for an input with `B·K`
/// rows, member `k` owns rows `[k·B, (k+1)·B)`.
#[derive(Clone, Debug)]
pub struct MimoQNetwork {
    layers: Vec<RankOneLayer>,
    ensemble_size: usize,
    revision: u64,
}

/// Per-layer activations kept by [`MimoQNetwork::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    revision: u64,
    members: usize,
    layers: Vec<LayerCache>,
}

#[derive(Clone, Debug)]
struct LayerCache {
    input: Matrix,
    /// `X ∘ V`
    modulated: Matrix,
    /// `(X ∘ V) W`
    mixed: Matrix,
    output: Matrix,
}

impl ForwardCache {
    pub fn rows(&self) -> usize {
        self.layers.first().map_or(0, |l| l.input.rows())
    }
}

/// Gradients with the exact shapes of a network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBuffer {
    pub layers: Vec<LayerGrads>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub weight: Matrix,
    /// Row `k` is ∂L/∂v_k.
    pub fast_in: Matrix,
    /// Row `k` is ∂L/∂s_k.
    pub fast_out: Matrix,
    /// Row `k` is ∂L/∂b_k.
    pub bias: Matrix,
}

impl GradBuffer {
    pub fn zeros_like(net: &MimoQNetwork) -> Self {
        let layers = net
            .layers
            .iter()
            .map(|l| LayerGrads {
                weight: Matrix::zeros(l.input_dim(), l.output_dim()),
                fast_in: Matrix::zeros(net.ensemble_size, l.input_dim()),
                fast_out: Matrix::zeros(net.ensemble_size, l.output_dim()),
                bias: Matrix::zeros(net.ensemble_size, l.output_dim()),
            })
            .collect();
        GradBuffer { layers }
    }

    /// Slices in the same order as [`MimoQNetwork::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice(),
                    l.fast_in.as_slice(),
                    l.fast_out.as_slice(),
                    l.bias.as_slice(),
                ]
            })
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Parameter totals for a rank-one ensemble and its dense counterparts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamCount {
    /// Shared weights, fast weights and per-member biases.
    pub mimo_params: usize,
    /// K independent dense networks with the same layer shapes.
    pub naive_equivalent_params: usize,
    /// One dense network.
    pub single_net_params: usize,
    /// The three totals above with every bias term excluded.
    pub mimo_weights: usize,
    pub naive_equivalent_weights: usize,
    pub single_net_weights: usize,
}

impl ParamCount {
    pub fn mimo_rel_single(&self) -> f64 {
        self.mimo_params as f64 / self.single_net_params as f64
    }

    pub fn naive_rel_single(&self) -> f64 {
        self.naive_equivalent_params as f64 / self.single_net_params as f64
    }
}

/// Closed-form parameter totals for layer shapes `dims` and `k` members.
pub fn param_count_for(dims: &[usize], k: usize) -> ParamCount {
    let mut count = ParamCount {
        mimo_params: 0,
        naive_equivalent_params: 0,
        single_net_params: 0,
        mimo_weights: 0,
        naive_equivalent_weights: 0,
        single_net_weights: 0,
    };
    for pair in dims.windows(2) {
        let (m, n) = (pair[0], pair[1]);
        count.mimo_params += m * n + k * (m + n) + k * n;
        count.naive_equivalent_params += k * (m * n + n);
        count.single_net_params += m * n + n;
        count.mimo_weights += m * n + k * (m + n);
        count.naive_equivalent_weights += k * m * n;
        count.single_net_weights += m * n;
    }
    count
}

/// Builds a network over `layer_dims = [input, hidden.., 1]` with `k` members.
///
/// Hidden layers use relu, the output layer is linear.
pub fn init_network(layer_dims: &[usize], k: usize, rng: &mut RngStream) -> Result<MimoQNetwork> {
    if k == 0 {
        return Err(Error::Config("ensemble size K must be at least 1".into()));
    }
    if layer_dims.len() < 2 {
        return Err(Error::Config(format!(
            "need at least input and output dims, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config(format!("zero-width layer in {layer_dims:?}")));
    }
    if *layer_dims.last().unwrap() != 1 {
        return Err(Error::Config(format!(
            "Q network must end in a single output, got {layer_dims:?}"
        )));
    }
    let last = layer_dims.len() - 2;
    let layers = layer_dims
        .windows(2)
        .enumerate()
        .map(|(i, pair)| {
            let act = if i == last {
                Activation::Identity
            } else {
                Activation::Relu
            };
            RankOneLayer::init(pair[0], pair[1], k, act, rng)
        })
        .collect();
    MimoQNetwork::from_layers(layers)
}

// Equality is over parameters only; the cache revision is bookkeeping.
impl PartialEq for MimoQNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.ensemble_size == other.ensemble_size && self.layers == other.layers
    }
}

impl MimoQNetwork {
    pub fn from_layers(layers: Vec<RankOneLayer>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Config("network needs at least one layer".into()))?;
        let k = first.ensemble_size();
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} but layer {} takes {}",
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        if let Some(i) = layers.iter().position(|l| l.ensemble_size() != k) {
            return Err(Error::Shape(format!(
                "layer {i} has {} members, layer 0 has {k}",
                layers[i].ensemble_size()
            )));
        }
        let out = layers.last().unwrap();
        if out.output_dim() != 1 || out.activation() != Activation::Identity {
            return Err(Error::Config(
                "final layer must be a single linear output".into(),
            ));
        }
        Ok(MimoQNetwork {
            layers,
            ensemble_size: k,
            revision: 0,
        })
    }

    pub fn ensemble_size(&self) -> usize {
        self.ensemble_size
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    /// `[input, hidden.., 1]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.output_dim()));
        dims
    }

    pub fn layers(&self) -> &[RankOneLayer] {
        &self.layers
    }

    /// Mutable layer access; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [RankOneLayer] {
        self.revision += 1;
        &mut self.layers
    }

    pub fn param_count(&self) -> ParamCount {
        param_count_for(&self.layer_dims(), self.ensemble_size)
    }

    pub fn num_params(&self) -> usize {
        self.param_count().mimo_params
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.param_slices()).collect()
    }

    /// Mutable parameter slices; invalidates outstanding forward caches.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.revision += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| l.param_slices_mut())
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_slices().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "{} values for {} parameters",
                flat.len(),
                self.num_params()
            )));
        }
        let mut offset = 0;
        for s in self.param_slices_mut() {
            let n = s.len();
            s.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// Polyak averaging `self ← (1−τ)·self + τ·online`.
    pub fn soft_update_from(&mut self, online: &MimoQNetwork, tau: f64) -> Result<()> {
        if self.layer_dims() != online.layer_dims() || self.ensemble_size != online.ensemble_size {
            return Err(Error::Shape("target and online critics differ in shape".into()));
        }
        let src = online.param_slices();
        for (dst, src) in self.param_slices_mut().into_iter().zip(src) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = (1.0 - tau) * *d + tau * s;
            }
        }
        Ok(())
    }

    /// Single-member network holding member `k`'s fast weights and bias.
    pub fn member(&self, k: usize) -> Result<MimoQNetwork> {
        if k >= self.ensemble_size {
            return Err(Error::Index {
                index: k,
                len: self.ensemble_size,
            });
        }
        let layers = self
            .layers
            .iter()
            .map(|l| {
                RankOneLayer::from_parts(
                    l.weight.clone(),
                    Matrix::from_vec(1, l.input_dim(), l.fast_in(k).to_vec())?,
                    Matrix::from_vec(1, l.output_dim(), l.fast_out(k).to_vec())?,
                    Matrix::from_vec(1, l.output_dim(), l.bias(k).to_vec())?,
                    l.activation,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        MimoQNetwork::from_layers(layers)
    }

    fn check_inputs(&self, inputs: &Matrix) -> Result<usize> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} columns, network takes {}",
                inputs.cols(),
                self.input_dim()
            )));
        }
        if !inputs.rows().is_multiple_of(self.ensemble_size) {
            return Err(Error::Shape(format!(
                "{} rows cannot be split into {} member blocks",
                inputs.rows(),
                self.ensemble_size
            )));
        }
        Ok(inputs.rows() / self.ensemble_size)
    }

    /// Single pass over all members: per layer `Y = Φ(((X ∘ V) W) ∘ S + B)`.
    ///
    /// Returns the `B·K × 1` outputs and the activations needed by
    /// [`backward`](Self::backward).
    pub fn forward(&self, inputs: &Matrix) -> Result<(Matrix, ForwardCache)> {
        let block = self.check_inputs(inputs)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut x = inputs.clone();
        for layer in &self.layers {
            let (modulated, mixed, output) = layer_forward(layer, &x, block, true);
            let mixed = mixed.expect("kept");
            caches.push(LayerCache {
                input: x,
                modulated,
                mixed,
                output: output.clone(),
            });
            x = output;
        }
        Ok((
            x,
            ForwardCache {
                revision: self.revision,
                members: self.ensemble_size,
                layers: caches,
            },
        ))
    }

    /// [`forward`](Self::forward) without keeping a cache.
    pub fn predict(&self, inputs: &Matrix) -> Result<Matrix> {
        let block = self.check_inputs(inputs)?;
        let mut x = layer_predict(&self.layers[0], inputs, block);
        for layer in &self.layers[1..] {
            x = layer_predict(layer, &x, block);
        }
        Ok(x)
    }

    /// Evaluates every member on the same `B` inputs; returns `B × K` head values.
    pub fn q_heads(&self, inputs: &Matrix) -> Result<Matrix> {
        let b = inputs.rows();
        let out = self.predict(&inputs.repeat_rows(self.ensemble_size))?;
        Ok(blocks_to_heads(out.as_slice(), b, self.ensemble_size))
    }

    /// Dense forward of member `k` through explicitly realized weights.
    ///
    /// Kept as an independent reference for the vectorized path.
    pub fn naive_member_forward(&self, x: &[f64], k: usize) -> Result<f64> {
        if k >= self.ensemble_size {
            return Err(Error::Index {
                index: k,
                len: self.ensemble_size,
            });
        }
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {} entries, network takes {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut h = x.to_vec();
        for layer in &self.layers {
            let w = realize_member_weight(layer, k)?;
            let b = layer.bias(k);
            let next: Vec<f64> = (0..layer.output_dim())
                .map(|j| {
                    let z: f64 = (0..layer.input_dim()).map(|i| h[i] * w[(i, j)]).sum();
                    layer.activation.apply(z + b[j])
                })
                .collect();
            h = next;
        }
        Ok(h[0])
    }

    /// Gradients of `L = Σ_r upstream[r]·output[r]` for every parameter.
    pub fn backward(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<GradBuffer> {
        Ok(self.backward_impl(cache, upstream, true, false)?.0.expect("requested"))
    }

    /// Gradient of `L` with respect to the network input only.
    pub fn backward_input(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<Matrix> {
        Ok(self.backward_impl(cache, upstream, false, true)?.1.expect("requested"))
    }

    pub fn backward_full(&self, cache: &ForwardCache, upstream: &[f64]) -> Result<(GradBuffer, Matrix)> {
        let (g, x) = self.backward_impl(cache, upstream, true, true)?;
        Ok((g.expect("requested"), x.expect("requested")))
    }

    fn backward_impl(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<GradBuffer>, Option<Matrix>)> {
        if cache.revision != self.revision
            || cache.members != self.ensemble_size
            || cache.layers.len() != self.layers.len()
        {
            return Err(Error::StaleCache(
                "forward cache was produced by a different network state".into(),
            ));
        }
        for (l, c) in self.layers.iter().zip(&cache.layers) {
            if c.input.cols() != l.input_dim() || c.output.cols() != l.output_dim() {
                return Err(Error::StaleCache("cached activations do not match layer shapes".into()));
            }
        }
        let rows = cache.rows();
        if upstream.len() != rows {
            return Err(Error::Shape(format!(
                "{} upstream gradients for {rows} output rows",
                upstream.len()
            )));
        }
        let k_members = self.ensemble_size;
        let block = rows / k_members;

        let mut grads = want_params.then(|| GradBuffer::zeros_like(self));
        let mut g_out = Matrix::from_vec(rows, 1, upstream.to_vec())?;

        for (li, (layer, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            let n = layer.output_dim();
            let m = layer.input_dim();

            // dL/dZ
            let mut g = g_out;
            if layer.activation == Activation::Relu {
                for (gv, y) in g.as_mut_slice().iter_mut().zip(c.output.as_slice()) {
                    if *y <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }

            // dL/dH = G ∘ S
            let mut g_mixed = g.clone();
            for r in 0..rows {
                let s = layer.fast_out(r / block);
                for (gv, sv) in g_mixed.row_mut(r).iter_mut().zip(s) {
                    *gv *= sv;
                }
            }

            // dL/d(X∘V); needed for v-gradients and for the layer below.
            let need_dx = li > 0 || want_input || want_params;
            let g_modulated = if need_dx {
                Some(g_mixed.matmul_t(&layer.weight)?)
            } else {
                None
            };

            if let Some(grads) = grads.as_mut() {
                let lg = &mut grads.layers[li];
                lg.weight = c.modulated.t_matmul(&g_mixed)?;
                let gm = g_modulated.as_ref().expect("computed when params requested");
                for r in 0..rows {
                    let k = r / block;
                    let gr = g.row(r);
                    let hr = c.mixed.row(r);
                    let ds = lg.fast_out.row_mut(k);
                    for j in 0..n {
                        ds[j] += gr[j] * hr[j];
                    }
                    let db = lg.bias.row_mut(k);
                    for j in 0..n {
                        db[j] += gr[j];
                    }
                    let gmr = gm.row(r);
                    let xr = c.input.row(r);
                    let dv = lg.fast_in.row_mut(k);
                    for i in 0..m {
                        dv[i] += gmr[i] * xr[i];
                    }
                }
            }

            g_out = match g_modulated {
                Some(mut gm) => {
                    for r in 0..rows {
                        let v = layer.fast_in(r / block);
                        for (gv, vv) in gm.row_mut(r).iter_mut().zip(v) {
                            *gv *= vv;
                        }
                    }
                    gm
                }
                None => Matrix::zeros(0, 0),
            };
        }

        Ok((grads, want_input.then_some(g_out)))
    }
}

fn layer_forward(
    layer: &RankOneLayer,
    x: &Matrix,
    block: usize,
    keep: bool,
) -> (Matrix, Option<Matrix>, Matrix) {
    let mut modulated = x.clone();
    for r in 0..x.rows() {
        let v = layer.fast_in(r / block);
        for (xv, vv) in modulated.row_mut(r).iter_mut().zip(v) {
            *xv *= vv;
        }
    }
    let mixed = modulated
        .matmul(&layer.weight)
        .expect("shapes validated by caller");
    let mut out = mixed.clone();
    for r in 0..x.rows() {
        let k = r / block;
        let s = layer.fast_out(k);
        let b = layer.bias(k);
        for ((o, sv), bv) in out.row_mut(r).iter_mut().zip(s).zip(b) {
            *o = layer.activation.apply(*o * sv + bv);
        }
    }
    (modulated, keep.then_some(mixed), out)
}

/// Cache-free layer pass: one modulated copy, then scale, bias and activation in place.
fn layer_predict(layer: &RankOneLayer, x: &Matrix, block: usize) -> Matrix {
    let mut modulated = Matrix::zeros(x.rows(), x.cols());
    for r in 0..x.rows() {
        let v = layer.fast_in(r / block);
        for ((m, xv), vv) in modulated.row_mut(r).iter_mut().zip(x.row(r)).zip(v) {
            *m = xv * vv;
        }
    }
    let mut out = modulated.matmul(&layer.weight).expect("shapes validated by caller");
    for r in 0..out.rows() {
        let k = r / block;
        let (s, b) = (layer.fast_out(k), layer.bias(k));
        for ((o, sv), bv) in out.row_mut(r).iter_mut().zip(s).zip(b) {
            *o = layer.activation.apply(*o * sv + bv);
        }
    }
    out
}

/// Reorders member-blocked outputs (`K` blocks of `B`) into a `B × K` matrix.
pub fn blocks_to_heads(outputs: &[f64], batch: usize, k: usize) -> Matrix {
    let mut heads = Matrix::zeros(batch, k);
    for member in 0..k {
        for b in 0..batch {
            heads[(b, member)] = outputs[member * batch + b];
        }
    }
    heads
}
