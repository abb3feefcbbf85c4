//! Fixed-topology multilayer perceptrons in double precision.
//!
//! Layers are dense and fully connected. Hidden layers use ReLU; the output
//! layer uses tanh (actors) or identity (critics). All passes operate on
//! row-major batches: one sample per row.
//!
//! Weights are initialised from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` and
//! biases start at zero.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::Rng;
use crate::{Error, Result};

/// Activation applied by the output layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|x| x.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Identity => {}
        }
    }

    /// Multiplies `grad` in place by the activation derivative, given the
    /// pre-activation `z` and activation output `a`.
    fn backprop(self, grad: &mut Array2<f64>, z: &Array2<f64>, a: &Array2<f64>) {
        match self {
            Activation::Relu => Zip::from(grad).and(z).for_each(|g, &z| {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(grad).and(a).for_each(|g, &a| *g *= 1.0 - a * a),
            Activation::Identity => {}
        }
    }
}

/// Weights and biases of a feed-forward network.
///
/// Weight matrix `k` has shape `(layer_sizes[k + 1], layer_sizes[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    output: Activation,
}

/// Intermediate values of one batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[k]` is the input of layer `k`; the last entry is the output.
    activations: Vec<Array2<f64>>,
    /// Pre-activation values of every layer.
    pre: Vec<Array2<f64>>,
}

impl ForwardCache {
    /// Number of layers the cache covers.
    pub fn depth(&self) -> usize {
        self.pre.len()
    }

    pub fn output(&self) -> &Array2<f64> {
        self.activations.last().expect("cache holds at least the input")
    }

    pub fn batch_size(&self) -> usize {
        self.activations[0].nrows()
    }
}

/// Parameter-shaped collection: gradients, Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            weights: mlp.weights.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            biases: mlp.biases.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
        }
    }

    /// True when every array has the same shape as the matching parameter.
    pub fn matches(&self, mlp: &Mlp) -> bool {
        self.weights.len() == mlp.weights.len()
            && self.biases.len() == mlp.biases.len()
            && self.weights.iter().zip(&mlp.weights).all(|(g, w)| g.dim() == w.dim())
            && self.biases.iter().zip(&mlp.biases).all(|(g, b)| g.dim() == b.dim())
    }

    /// Entries in the same order as [`Mlp::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }
}

impl Mlp {
    /// Randomly initialised network.
    pub fn new(layer_sizes: &[usize], output: Activation, rng: &mut Rng) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.random_range(-bound..bound)
            });
            weights.push(w);
            biases.push(Array1::zeros(fan_out));
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            output,
        })
    }

    /// Network with every parameter set to zero.
    pub fn zeroed(layer_sizes: &[usize], output: Activation) -> Result<Self> {
        validate_sizes(layer_sizes)?;
        let weights = layer_sizes
            .windows(2)
            .map(|p| Array2::zeros((p[1], p[0])))
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            output,
        })
    }

    /// Network built from explicit parameters; shapes are checked.
    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        output: Activation,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::Shape(format!(
                "{} weight matrices but {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut layer_sizes = vec![weights[0].ncols()];
        for (k, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *layer_sizes.last().unwrap() || b.len() != w.nrows() {
                return Err(Error::Shape(format!(
                    "layer {k}: weight {:?} and bias {} do not chain",
                    w.dim(),
                    b.len()
                )));
            }
            layer_sizes.push(w.nrows());
        }
        validate_sizes(&layer_sizes)?;
        let mlp = Self {
            layer_sizes,
            weights,
            biases,
            output,
        };
        if !mlp.is_finite() {
            return Err(Error::Domain("non-finite parameter".into()));
        }
        Ok(mlp)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    /// All parameters flattened layer by layer: weights row-major, then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    /// Inverse of [`Mlp::flat_params`].
    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|x| *x = it.next().unwrap());
            b.iter_mut().for_each(|x| *x = it.next().unwrap());
        }
        Ok(())
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_sizes == other.layer_sizes && self.output == other.output
    }

    /// Forward pass over a batch, keeping what backprop needs.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(input.ncols())?;
        let layers = self.num_layers();
        let mut activations = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        activations.push(input.to_owned());
        for k in 0..layers {
            let z = self.affine(k, activations[k].view());
            let mut a = z.clone();
            self.activation(k).apply(&mut a);
            pre.push(z);
            activations.push(a);
        }
        let out = activations[layers].clone();
        Ok((out, ForwardCache { activations, pre }))
    }

    /// Forward pass without a cache.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(input.ncols())?;
        let mut a = self.affine(0, input);
        self.activation(0).apply(&mut a);
        for k in 1..self.num_layers() {
            a = self.affine(k, a.view());
            self.activation(k).apply(&mut a);
        }
        Ok(a)
    }

    /// Single-sample convenience wrapper around [`Mlp::predict`].
    pub fn predict_one(&self, input: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, input.len()), input)
            .map_err(|e| Error::Shape(e.to_string()))?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    /// Parameter gradients of a scalar loss, given `dL/d(output)` per batch row.
    pub fn backward(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Gradients> {
        Ok(self.backprop(cache, output_grad, true, false)?.0.unwrap())
    }

    /// Parameter gradients together with `dL/d(input)`.
    pub fn backward_with_input(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<(Gradients, Array2<f64>)> {
        let (g, x) = self.backprop(cache, output_grad, true, true)?;
        Ok((g.unwrap(), x.unwrap()))
    }

    /// Only `dL/d(input)`; parameter gradients are not formed.
    pub fn input_gradient(&self, cache: &ForwardCache, output_grad: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.backprop(cache, output_grad, false, true)?.1.unwrap())
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
        want_params: bool,
        want_input: bool,
    ) -> Result<(Option<Gradients>, Option<Array2<f64>>)> {
        self.check_cache(cache)?;
        let batch = cache.batch_size();
        if output_grad.dim() != (batch, self.output_dim()) {
            return Err(Error::Shape(format!(
                "output gradient {:?}, expected ({batch}, {})",
                output_grad.dim(),
                self.output_dim()
            )));
        }
        let layers = self.num_layers();
        let mut gw = Vec::with_capacity(layers);
        let mut gb = Vec::with_capacity(layers);
        let mut delta = output_grad.to_owned();
        let mut input_grad = None;
        for k in (0..layers).rev() {
            self.activation(k)
                .backprop(&mut delta, &cache.pre[k], &cache.activations[k + 1]);
            if want_params {
                gw.push(delta.t().dot(&cache.activations[k]));
                gb.push(delta.sum_axis(Axis(0)));
            }
            if k > 0 || want_input {
                let next = delta.dot(&self.weights[k]);
                if k == 0 {
                    input_grad = Some(next);
                    break;
                }
                delta = next;
            }
        }
        let grads = want_params.then(|| {
            gw.reverse();
            gb.reverse();
            Gradients {
                weights: gw,
                biases: gb,
            }
        });
        Ok((grads, input_grad))
    }

    fn affine(&self, k: usize, input: ArrayView2<f64>) -> Array2<f64> {
        let mut z = input.dot(&self.weights[k].t());
        z += &self.biases[k];
        z
    }

    fn activation(&self, k: usize) -> Activation {
        if k + 1 == self.num_layers() {
            self.output
        } else {
            Activation::Relu
        }
    }

    fn check_input(&self, cols: usize) -> Result<()> {
        if cols != self.input_dim() {
            return Err(Error::Shape(format!(
                "input has {cols} features, network expects {}",
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn check_cache(&self, cache: &ForwardCache) -> Result<()> {
        let ok = cache.depth() == self.num_layers()
            && cache.activations.len() == self.num_layers() + 1
            && cache
                .activations
                .iter()
                .zip(&self.layer_sizes)
                .all(|(a, &n)| a.ncols() == n);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("forward cache does not match this network".into()))
        }
    }
}

fn validate_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "an MLP needs at least 2 layer sizes, got {}",
            layer_sizes.len()
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Config(format!("layer sizes must be positive: {layer_sizes:?}")));
    }
    Ok(())
}

/// Adam optimiser state for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub const DEFAULT_LR: f64 = 3e-4;

    /// Fresh state with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(mlp: &Mlp, lr: f64) -> Self {
        Self::with_betas(mlp, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(mlp: &Mlp, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Gradients::zeros_like(mlp),
            v: Gradients::zeros_like(mlp),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update of `params` along `-grads`.
    pub fn step(&mut self, params: &mut Mlp, grads: &Gradients) -> Result<()> {
        if !grads.matches(params) || !self.m.matches(params) {
            return Err(Error::Shape(
                "parameters, gradients and Adam moments disagree in shape".into(),
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let lr_t = self.lr;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let update = |p: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr_t * m_hat / (v_hat.sqrt() + eps);
        };
        for k in 0..params.num_layers() {
            Zip::from(&mut params.weights[k])
                .and(&grads.weights[k])
                .and(&mut self.m.weights[k])
                .and(&mut self.v.weights[k])
                .for_each(update);
            Zip::from(&mut params.biases[k])
                .and(&grads.biases[k])
                .and(&mut self.m.biases[k])
                .and(&mut self.v.biases[k])
                .for_each(update);
        }
        Ok(())
    }
}

/// Soft target update: `target <- tau * online + (1 - tau) * target`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Config(format!("polyak rate {tau} outside [0, 1]")));
    }
    if !target.same_architecture(online) {
        return Err(Error::Shape(format!(
            "target {:?} and online {:?} architectures differ",
            target.layer_sizes, online.layer_sizes
        )));
    }
    let keep = 1.0 - tau;
    for (t, o) in target.weights.iter_mut().zip(&online.weights) {
        Zip::from(t).and(o).for_each(|t, &o| *t = tau * o + keep * *t);
    }
    for (t, o) in target.biases.iter_mut().zip(&online.biases) {
        Zip::from(t).and(o).for_each(|t, &o| *t = tau * o + keep * *t);
    }
    Ok(())
}
