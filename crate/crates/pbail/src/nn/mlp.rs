//! Multi-layer perceptrons: parameter container, plain forward evaluation,
//! and tape registration for differentiable forwards.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::spectral::SpectralState;
use crate::nn::tape::{Gradients, Tape, Var};
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::{matmul_nn, Tensor};

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

/// Output-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Tanh,
    Sigmoid,
}

/// One affine layer; `w` is `in x out`, `b` is `1 x out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<S> {
    pub w: Tensor<S>,
    pub b: Tensor<S>,
}

/// MLP parameters plus the structural choices a forward pass needs.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<S> {
    layers: Vec<Layer<S>>,
    hidden: Activation,
    output: OutputActivation,
    /// Per-layer power-iteration state when spectral normalization is on.
    spectral: Option<Vec<SpectralState<S>>>,
}

/// Threshold below which a spectral sigma estimate is treated as zero.
const SIGMA_FLOOR: f64 = 1e-30;

impl<S: Scalar> Mlp<S> {
    /// Fresh network with He-style initialization (gain 2 for ReLU hidden
    /// layers, 1 otherwise) and zero biases.
    pub fn new(
        dims: &[usize],
        hidden: Activation,
        output: OutputActivation,
        spectral: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::ShapeMismatch(format!(
                "mlp needs at least input and output dims, all nonzero: {dims:?}"
            )));
        }
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (idx, pair) in dims.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let last = idx == dims.len() - 2;
            let gain = if !last && hidden == Activation::Relu {
                2.0
            } else {
                1.0
            };
            let std = (gain / fan_in as f64).sqrt();
            let mut w = Tensor::zeros(fan_in, fan_out);
            for x in w.data_mut() {
                *x = S::c(std * rng.sample::<f64, _>(StandardNormal));
            }
            layers.push(Layer {
                w,
                b: Tensor::zeros(1, fan_out),
            });
        }
        let spectral = spectral.then(|| {
            layers
                .iter()
                .map(|l| SpectralState::init(l.w.rows(), l.w.cols(), rng))
                .collect()
        });
        Ok(Self {
            layers,
            hidden,
            output,
            spectral,
        })
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].w.rows()];
        dims.extend(self.layers.iter().map(|l| l.w.cols()));
        dims
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.cols()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn layers(&self) -> &[Layer<S>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<S>] {
        &mut self.layers
    }

    pub fn is_spectral(&self) -> bool {
        self.spectral.is_some()
    }

    pub fn spectral_states(&self) -> Option<&[SpectralState<S>]> {
        self.spectral.as_deref()
    }

    pub fn spectral_states_mut(&mut self) -> Option<&mut [SpectralState<S>]> {
        self.spectral.as_deref_mut()
    }

    /// Replaces structural state wholesale; used by checkpoint loading.
    pub fn from_parts(
        layers: Vec<Layer<S>>,
        hidden: Activation,
        output: OutputActivation,
        spectral: Option<Vec<SpectralState<S>>>,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::ShapeMismatch("mlp needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].w.cols() != pair[1].w.rows() {
                return Err(Error::ShapeMismatch(format!(
                    "layer widths disagree: {} out vs {} in",
                    pair[0].w.cols(),
                    pair[1].w.rows()
                )));
            }
        }
        if let Some(states) = &spectral {
            if states.len() != layers.len() {
                return Err(Error::ShapeMismatch(
                    "one spectral state per layer required".into(),
                ));
            }
        }
        Ok(Self {
            layers,
            hidden,
            output,
            spectral,
        })
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// One power-iteration refinement per spectral layer. Call once per
    /// training step before registering the net on a tape.
    pub fn power_iterate(&mut self) {
        if let Some(states) = &mut self.spectral {
            for (layer, state) in self.layers.iter().zip(states) {
                state.power_iterate(&layer.w);
            }
        }
    }

    /// Effective weight of layer `idx`: spectral-normalized when enabled.
    fn effective_weight(&self, idx: usize) -> Tensor<S> {
        let w = &self.layers[idx].w;
        match &self.spectral {
            Some(states) => {
                let sigma = states[idx].sigma(w);
                if sigma.as_f64().abs() < SIGMA_FLOOR {
                    w.clone()
                } else {
                    w.map(|x| x / sigma)
                }
            }
            None => w.clone(),
        }
    }

    /// Plain (non-differentiable) forward pass on a batch of rows.
    pub fn eval(&self, x: &Tensor<S>) -> Result<Tensor<S>> {
        if x.cols() != self.in_dim() {
            return Err(Error::ShapeMismatch(format!(
                "mlp input width {} but got {}",
                self.in_dim(),
                x.cols()
            )));
        }
        let mut h = x.clone();
        let last = self.layers.len() - 1;
        for idx in 0..self.layers.len() {
            let w = self.effective_weight(idx);
            let b = &self.layers[idx].b;
            let mut out = Tensor::zeros(h.rows(), w.cols());
            matmul_nn(&h, &w, &mut out, false);
            for i in 0..out.rows() {
                let row = &mut out.data_mut()[i * b.len()..(i + 1) * b.len()];
                for (o, &bv) in row.iter_mut().zip(b.data()) {
                    *o += bv;
                }
            }
            if idx < last {
                match self.hidden {
                    Activation::Relu => {
                        for v in out.data_mut() {
                            *v = v.max(S::zero());
                        }
                    }
                    Activation::Tanh => {
                        for v in out.data_mut() {
                            *v = v.tanh();
                        }
                    }
                }
            } else {
                match self.output {
                    OutputActivation::Identity => {}
                    OutputActivation::Tanh => {
                        for v in out.data_mut() {
                            *v = v.tanh();
                        }
                    }
                    OutputActivation::Sigmoid => {
                        for v in out.data_mut() {
                            *v = sigmoid(*v);
                        }
                    }
                }
            }
            h = out;
        }
        Ok(h)
    }

    /// Registers all parameters on `tape` and returns handles for building
    /// differentiable forwards. Spectral layers contribute their scaling
    /// factor to the graph, so gradients include the normalization term.
    pub fn register(&self, tape: &mut Tape<S>) -> TapedMlp {
        self.register_impl(tape, true)
    }

    /// Like [`register`](Self::register) but with every parameter entered as
    /// a constant. Used when the network participates in a loss whose
    /// gradient should not reach it (critics inside the policy objective).
    pub fn register_frozen(&self, tape: &mut Tape<S>) -> TapedMlp {
        self.register_impl(tape, false)
    }

    fn register_impl(&self, tape: &mut Tape<S>, trainable: bool) -> TapedMlp {
        let mut weights_eff = Vec::with_capacity(self.layers.len());
        let mut params = Vec::with_capacity(self.layers.len() * 2);
        let mut biases = Vec::with_capacity(self.layers.len());
        for (idx, layer) in self.layers.iter().enumerate() {
            let (w, b) = if trainable {
                (tape.param(layer.w.clone()), tape.param(layer.b.clone()))
            } else {
                (
                    tape.constant(layer.w.clone()),
                    tape.constant(layer.b.clone()),
                )
            };
            let w_eff = match &self.spectral {
                Some(states) => {
                    let state = &states[idx];
                    let sigma_now = state.sigma(&layer.w);
                    if sigma_now.as_f64().abs() < SIGMA_FLOOR {
                        w
                    } else {
                        let u = tape.constant(state.u.clone());
                        let v = tape.constant(state.v.clone());
                        let uw = tape.matmul(u, w);
                        let sigma = tape.matmul(uw, v);
                        let inv = tape.recip(sigma);
                        tape.mul_scalar(w, inv)
                    }
                }
                None => w,
            };
            weights_eff.push(w_eff);
            params.push(w);
            params.push(b);
            biases.push(b);
        }
        TapedMlp {
            weights_eff,
            biases,
            params,
            hidden: self.hidden,
            output: self.output,
            in_dim: self.in_dim(),
        }
    }

    /// Polyak-averages `src` into `self`: `theta <- (1 - tau) theta + tau src`.
    pub fn blend_from(&mut self, src: &Mlp<S>, tau: S) {
        assert_eq!(self.dims(), src.dims(), "blend_from dims mismatch");
        let keep = S::one() - tau;
        for (dst, s) in self.layers.iter_mut().zip(&src.layers) {
            for (d, &sv) in dst.w.data_mut().iter_mut().zip(s.w.data()) {
                *d = keep * *d + tau * sv;
            }
            for (d, &sv) in dst.b.data_mut().iter_mut().zip(s.b.data()) {
                *d = keep * *d + tau * sv;
            }
        }
    }

    /// All parameters flattened in optimizer order (w0, b0, w1, b1, ...).
    pub fn flat_params(&self) -> Vec<S> {
        let mut flat = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            flat.extend_from_slice(layer.w.data());
            flat.extend_from_slice(layer.b.data());
        }
        flat
    }

    /// Overwrites parameters from a flat vector in optimizer order.
    pub fn set_flat_params(&mut self, flat: &[S]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!(
                "flat param length {} but net has {}",
                flat.len(),
                self.param_count()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let wn = layer.w.len();
            layer.w.data_mut().copy_from_slice(&flat[offset..offset + wn]);
            offset += wn;
            let bn = layer.b.len();
            layer.b.data_mut().copy_from_slice(&flat[offset..offset + bn]);
            offset += bn;
        }
        Ok(())
    }

    /// Shapes of parameters in optimizer order, for optimizer state setup.
    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            shapes.push(layer.w.shape());
            shapes.push(layer.b.shape());
        }
        shapes
    }

    /// Weight-decay mask in optimizer order: weights decay, biases do not.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.layers.len() * 2);
        for _ in &self.layers {
            mask.push(true);
            mask.push(false);
        }
        mask
    }
}

/// Handles to one registered network on a tape.
pub struct TapedMlp {
    weights_eff: Vec<Var>,
    biases: Vec<Var>,
    params: Vec<Var>,
    hidden: Activation,
    output: OutputActivation,
    in_dim: usize,
}

impl TapedMlp {
    /// Differentiable forward pass for a `batch x in_dim` input var.
    pub fn forward<S: Scalar>(&self, tape: &mut Tape<S>, x: Var) -> Result<Var> {
        if tape.value(x).cols() != self.in_dim {
            return Err(Error::ShapeMismatch(format!(
                "mlp input width {} but got {}",
                self.in_dim,
                tape.value(x).cols()
            )));
        }
        let mut h = x;
        let last = self.weights_eff.len() - 1;
        for idx in 0..self.weights_eff.len() {
            let z = tape.matmul(h, self.weights_eff[idx]);
            let z = tape.add_row_vec(z, self.biases[idx]);
            h = if idx < last {
                match self.hidden {
                    Activation::Relu => tape.relu(z),
                    Activation::Tanh => tape.tanh(z),
                }
            } else {
                match self.output {
                    OutputActivation::Identity => z,
                    OutputActivation::Tanh => tape.tanh(z),
                    OutputActivation::Sigmoid => tape.sigmoid(z),
                }
            };
        }
        Ok(h)
    }

    /// Raw parameter vars in optimizer order.
    pub fn param_vars(&self) -> &[Var] {
        &self.params
    }

    /// Extracts gradients in optimizer order, substituting zeros for
    /// parameters the loss never touched.
    pub fn grads<S: Scalar>(&self, grads: &mut Gradients<S>, net: &Mlp<S>) -> Vec<Tensor<S>> {
        self.params
            .iter()
            .zip(net.param_shapes())
            .map(|(&v, (r, c))| grads.take(v).unwrap_or_else(|| Tensor::zeros(r, c)))
            .collect()
    }
}
