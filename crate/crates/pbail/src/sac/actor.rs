//! Squashed Gaussian policy head.
//!
//! The policy network outputs `2 * act_dim` values per state: a mean and a
//! log standard deviation for each action dimension. Actions are
//! `tanh(mean + std * noise)`, which keeps them in `[-1, 1]`, and log
//! densities carry the tanh change-of-variables correction. The same math
//! exists twice: a plain evaluation path for acting and target computation,
//! and a tape path for differentiable losses. Tests pin them together.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::nn::{Mlp, Tape, TapedMlp, Var};
use crate::tensor::Tensor;
use crate::Real;

pub const LOG_STD_MIN: Real = -20.0;
pub const LOG_STD_MAX: Real = 2.0;
/// Added inside `ln(1 - tanh^2 + EPS)` so the correction stays finite at
/// saturated actions.
pub const SQUASH_EPS: Real = 1e-6;
/// Actions are pulled this far inside the open interval before `atanh`.
pub const ATANH_CLIP: Real = 1.0 - 1e-6;

const HALF_LN_TWO_PI: Real = 0.9189385332046727;

/// Draws a standard normal noise tensor shaped `n x act_dim`.
pub fn sample_noise(n: usize, act_dim: usize, rng: &mut ChaCha20Rng) -> Tensor<Real> {
    let data: Vec<Real> = (0..n * act_dim).map(|_| rng.sample(StandardNormal)).collect();
    Tensor::new(n, act_dim, data).expect("noise shape")
}

fn check_policy_net(net: &Mlp<Real>, act_dim: usize) -> Result<()> {
    if net.out_dim() != 2 * act_dim {
        return Err(Error::ShapeMismatch(format!(
            "policy net outputs {} values, expected {}",
            net.out_dim(),
            2 * act_dim
        )));
    }
    Ok(())
}

/// Plain-evaluation forward: squashed actions and their log densities for
/// the given noise draw. Pass `None` as noise for the deterministic mode
/// action (log density is not meaningful there and is returned as zeros).
pub fn policy_eval(
    net: &Mlp<Real>,
    states: &Tensor<Real>,
    act_dim: usize,
    noise: Option<&Tensor<Real>>,
) -> Result<(Tensor<Real>, Tensor<Real>)> {
    check_policy_net(net, act_dim)?;
    let out = net.eval(states)?;
    let n = states.rows();
    let mut actions = Tensor::zeros(n, act_dim);
    let mut logp = Tensor::zeros(n, 1);
    for r in 0..n {
        let mut lp = 0.0;
        for j in 0..act_dim {
            let mean = out.get(r, j);
            let log_std = out.get(r, act_dim + j).clamp(LOG_STD_MIN, LOG_STD_MAX);
            let std = log_std.exp();
            let (z, xi) = match noise {
                Some(noise) => {
                    let xi = noise.get(r, j);
                    (mean + std * xi, xi)
                }
                None => (mean, 0.0),
            };
            let a = z.tanh();
            actions.set(r, j, a);
            lp += -0.5 * xi * xi - log_std - HALF_LN_TWO_PI - (1.0 - a * a + SQUASH_EPS).ln();
        }
        if noise.is_some() {
            logp.set(r, 0, lp);
        }
    }
    Ok((actions, logp))
}

/// Tape forward mirroring [`policy_eval`] with a fixed noise draw: returns
/// `(actions, logp)` variables whose gradients flow to the policy
/// parameters through the reparameterization.
pub fn policy_taped(
    tape: &mut Tape<Real>,
    taped: &TapedMlp,
    states: Var,
    act_dim: usize,
    noise: &Tensor<Real>,
) -> Result<(Var, Var)> {
    let out = taped.forward(tape, states)?;
    let width = tape.value(out).cols();
    if width != 2 * act_dim {
        return Err(Error::ShapeMismatch(format!(
            "policy net outputs {width} values, expected {}",
            2 * act_dim
        )));
    }
    let mean = tape.slice_cols(out, 0, act_dim);
    let log_std_raw = tape.slice_cols(out, act_dim, 2 * act_dim);
    let log_std = tape.clamp(log_std_raw, LOG_STD_MIN, LOG_STD_MAX);
    let std = tape.exp(log_std);
    let xi = tape.constant(noise.clone());
    let scaled = tape.mul(std, xi);
    let z = tape.add(mean, scaled);
    let actions = tape.tanh(z);

    // Per-element log density, then a row sum across action dimensions:
    // -xi^2/2 - log_std - ln(2 pi)/2 - ln(1 - a^2 + eps).
    let xi_sq = tape.square(xi);
    let base = tape.scale(xi_sq, -0.5);
    let base = tape.sub(base, log_std);
    let base = tape.add_const(base, -HALF_LN_TWO_PI);
    let a_sq = tape.square(actions);
    let neg_a_sq = tape.neg(a_sq);
    let inside = tape.add_const(neg_a_sq, 1.0 + SQUASH_EPS);
    let correction = tape.ln(inside);
    let per_dim = tape.sub(base, correction);
    let logp = tape.row_sum(per_dim);
    Ok((actions, logp))
}

/// Mean negative log likelihood of dataset actions under the policy, for
/// behavior cloning. Dataset actions are pulled slightly inside `(-1, 1)`
/// before the inverse tanh.
pub fn bc_nll_taped(
    tape: &mut Tape<Real>,
    taped: &TapedMlp,
    states: &Tensor<Real>,
    actions: &Tensor<Real>,
) -> Result<Var> {
    let n = actions.rows();
    let act_dim = actions.cols();
    if states.rows() != n {
        return Err(Error::ShapeMismatch(format!(
            "bc batch rows {} vs {}",
            states.rows(),
            n
        )));
    }
    // z = atanh(a) and the data-side tanh correction are constants.
    let mut z_data = Tensor::zeros(n, act_dim);
    let mut correction = 0.0;
    for r in 0..n {
        for j in 0..act_dim {
            let a = actions.get(r, j).clamp(-ATANH_CLIP, ATANH_CLIP);
            z_data.set(r, j, a.atanh());
            correction += (1.0 - a * a + SQUASH_EPS).ln();
        }
    }
    correction /= n as Real;

    let sv = tape.constant(states.clone());
    let out = taped.forward(tape, sv)?;
    let mean = tape.slice_cols(out, 0, act_dim);
    let log_std_raw = tape.slice_cols(out, act_dim, 2 * act_dim);
    let log_std = tape.clamp(log_std_raw, LOG_STD_MIN, LOG_STD_MAX);
    let z = tape.constant(z_data);
    // Gaussian NLL per element: ((z - mean) / std)^2 / 2 + log_std + c.
    let diff = tape.sub(z, mean);
    let neg_log_std = tape.neg(log_std);
    let inv_std = tape.exp(neg_log_std);
    let ratio = tape.mul(diff, inv_std);
    let ratio_sq = tape.square(ratio);
    let half_sq = tape.scale(ratio_sq, 0.5);
    let nll_elem = tape.add(half_sq, log_std);
    let nll_elem = tape.add_const(nll_elem, HALF_LN_TWO_PI);
    let per_row = tape.row_sum(nll_elem);
    let mean_nll = tape.mean(per_row);
    // Add the constant data correction so the value is the true mean NLL of
    // the squashed density, not just the Gaussian part.
    Ok(tape.add_const(mean_nll, correction))
}
