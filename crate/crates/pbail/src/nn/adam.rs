//! Adam optimizer with optional weight decay.
//!
//! The decay term `lambda * theta` is added to the incoming gradient before
//! the moment updates, for the parameter groups whose mask entry is set
//! (weights yes, biases no, by [`Mlp::decay_mask`]).

use crate::error::{Error, Result};
use crate::nn::mlp::Mlp;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Adam state over a fixed list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<S> {
    lr: S,
    beta1: S,
    beta2: S,
    eps: S,
    weight_decay: S,
    t: u64,
    m: Vec<Tensor<S>>,
    v: Vec<Tensor<S>>,
}

impl<S: Scalar> Adam<S> {
    /// Fresh state for parameters with the given shapes, with the standard
    /// moment coefficients (0.9, 0.999) and epsilon 1e-8.
    pub fn new(lr: f64, weight_decay: f64, shapes: &[(usize, usize)]) -> Self {
        Self {
            lr: S::c(lr),
            beta1: S::c(0.9),
            beta2: S::c(0.999),
            eps: S::c(1e-8),
            weight_decay: S::c(weight_decay),
            t: 0,
            m: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Tensor::zeros(r, c)).collect(),
        }
    }

    /// Optimizer state sized for `net`'s parameters.
    pub fn for_mlp(lr: f64, weight_decay: f64, net: &Mlp<S>) -> Self {
        Self::new(lr, weight_decay, &net.param_shapes())
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over parallel slices of parameters, gradients, and decay
    /// flags. Lengths and shapes must line up with construction.
    pub fn step(
        &mut self,
        params: &mut [&mut Tensor<S>],
        grads: &[Tensor<S>],
        decay_mask: &[bool],
    ) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() || decay_mask.len() != self.m.len()
        {
            return Err(Error::ShapeMismatch(format!(
                "adam built for {} tensors, got {} params / {} grads / {} flags",
                self.m.len(),
                params.len(),
                grads.len(),
                decay_mask.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let bc1 = S::one() - self.beta1.powi(t);
        let bc2 = S::one() - self.beta2.powi(t);
        let one = S::one();
        for i in 0..params.len() {
            if params[i].shape() != grads[i].shape() {
                return Err(Error::ShapeMismatch(format!(
                    "adam tensor {i}: param {:?} vs grad {:?}",
                    params[i].shape(),
                    grads[i].shape()
                )));
            }
            let decay = if decay_mask[i] {
                self.weight_decay
            } else {
                S::zero()
            };
            let theta = params[i].data_mut();
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = grads[i].data();
            for j in 0..theta.len() {
                let grad = g[j] + decay * theta[j];
                m[j] = self.beta1 * m[j] + (one - self.beta1) * grad;
                v[j] = self.beta2 * v[j] + (one - self.beta2) * grad * grad;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                theta[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    /// Convenience update for one MLP with gradients in optimizer order.
    pub fn step_mlp(&mut self, net: &mut Mlp<S>, grads: &[Tensor<S>]) -> Result<()> {
        let mask = net.decay_mask();
        let mut params: Vec<&mut Tensor<S>> = Vec::with_capacity(grads.len());
        for layer in net.layers_mut() {
            params.push(&mut layer.w);
            params.push(&mut layer.b);
        }
        self.step(&mut params, grads, &mask)
    }
}
