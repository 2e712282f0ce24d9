//! Reward and reliability networks with their training objectives.
//!
//! Four losses live here. The labeled-preference loss scores pairs of
//! equal-length clips by summed reward and applies the Bradley-Terry
//! negative log-likelihood with fractional labels. The virtual-preference
//! loss asserts offline data is preferable to freshly collected behavior,
//! one sampled pair at a time. The reliability-weighted variant mixes that
//! assertion with its opposite through a learned per-pair reliability
//! `alpha(x, x') = sigmoid(logit)`, so imperfect offline data stops being
//! trusted unconditionally. The initialization objective trains the plain
//! virtual loss while pushing reliabilities toward 1, giving the mixture a
//! confident starting point.
//!
//! The reliability network sees two features per pair: the reward
//! difference `r(x) - r(x')` (detached from the reward parameters by
//! default, so reliability cannot reshape rewards through its own input)
//! and the replay sample's trajectory index normalized by the newest index,
//! which tells it how recent the behavior side of the pair is.

use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp, OutputActivation, Tape, TapedMlp, Var};
use crate::tensor::Tensor;
use crate::Real;

/// Scalar reward over concatenated (state, action) rows, spectrally
/// normalized to keep the preference logits well scaled.
#[derive(Clone)]
pub struct RewardNet {
    net: Mlp<Real>,
    obs_dim: usize,
    act_dim: usize,
}

impl RewardNet {
    pub fn new(
        obs_dim: usize,
        act_dim: usize,
        hidden: &[usize],
        rng: &mut ChaCha20Rng,
    ) -> Result<Self> {
        if obs_dim == 0 || act_dim == 0 || hidden.is_empty() {
            return Err(Error::Config(
                "reward net needs nonzero dims and hidden sizes".into(),
            ));
        }
        let mut dims = vec![obs_dim + act_dim];
        dims.extend(hidden);
        dims.push(1);
        let net = Mlp::new(
            &dims,
            Activation::Relu,
            OutputActivation::Identity,
            true,
            rng,
        )?;
        Ok(Self {
            net,
            obs_dim,
            act_dim,
        })
    }

    /// Wraps an existing network, typically loaded from a checkpoint.
    pub fn from_mlp(net: Mlp<Real>, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if net.in_dim() != obs_dim + act_dim || net.out_dim() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "reward net maps {} -> {}, expected {} -> 1",
                net.in_dim(),
                net.out_dim(),
                obs_dim + act_dim
            )));
        }
        Ok(Self {
            net,
            obs_dim,
            act_dim,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn mlp(&self) -> &Mlp<Real> {
        &self.net
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp<Real> {
        &mut self.net
    }

    pub fn power_iterate(&mut self) {
        self.net.power_iterate();
    }

    pub fn register(&self, tape: &mut Tape<Real>) -> TapedMlp {
        self.net.register(tape)
    }

    /// Rewards for rows of concatenated (state, action).
    pub fn eval_x(&self, x: &Tensor<Real>) -> Result<Tensor<Real>> {
        self.net.eval(x)
    }

    /// Reward of a single state-action pair.
    pub fn reward_one(&self, state: &[Real], action: &[Real]) -> Result<Real> {
        if state.len() != self.obs_dim || action.len() != self.act_dim {
            return Err(Error::ShapeMismatch(format!(
                "reward input dims {}+{}, expected {}+{}",
                state.len(),
                action.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        let mut row = Vec::with_capacity(self.obs_dim + self.act_dim);
        row.extend_from_slice(state);
        row.extend_from_slice(action);
        self.net.eval(&Tensor::row(&row))?.item()
    }
}

/// Per-pair reliability head: two input features, one logit.
#[derive(Clone)]
pub struct ReliabilityNet {
    net: Mlp<Real>,
}

pub const RELIABILITY_FEATURES: usize = 2;

impl ReliabilityNet {
    pub fn new(hidden: &[usize], rng: &mut ChaCha20Rng) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::Config("reliability net needs hidden sizes".into()));
        }
        let mut dims = vec![RELIABILITY_FEATURES];
        dims.extend(hidden);
        dims.push(1);
        let net = Mlp::new(
            &dims,
            Activation::Relu,
            OutputActivation::Identity,
            false,
            rng,
        )?;
        Ok(Self { net })
    }

    pub fn from_mlp(net: Mlp<Real>) -> Result<Self> {
        if net.in_dim() != RELIABILITY_FEATURES || net.out_dim() != 1 {
            return Err(Error::ShapeMismatch(format!(
                "reliability net maps {} -> {}, expected {} -> 1",
                net.in_dim(),
                net.out_dim(),
                RELIABILITY_FEATURES
            )));
        }
        Ok(Self { net })
    }

    pub fn mlp(&self) -> &Mlp<Real> {
        &self.net
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp<Real> {
        &mut self.net
    }

    pub fn register(&self, tape: &mut Tape<Real>) -> TapedMlp {
        self.net.register(tape)
    }

    /// Reliabilities in (0, 1) for feature rows, plain evaluation.
    pub fn alpha_eval(&self, features: &Tensor<Real>) -> Result<Tensor<Real>> {
        Ok(self.net.eval(features)?.map(crate::scalar::sigmoid))
    }
}

/// One minibatch of labeled clip pairs, flattened for batched evaluation.
/// `x1` stacks every row of every first clip; `bounds1` (length pairs + 1)
/// splits it back into clips. Labels are in [0, 1]; 0.5 marks a tie.
#[derive(Clone, Debug)]
pub struct PairedClipBatch {
    pub x1: Tensor<Real>,
    pub bounds1: Vec<usize>,
    pub x2: Tensor<Real>,
    pub bounds2: Vec<usize>,
    pub labels: Tensor<Real>,
}

impl PairedClipBatch {
    pub fn pairs(&self) -> usize {
        self.labels.rows()
    }

    fn validate(&self) -> Result<()> {
        let k = self.labels.rows();
        if self.labels.cols() != 1 || k == 0 {
            return Err(Error::Data(format!(
                "labels must be a nonempty column, got {}x{}",
                self.labels.rows(),
                self.labels.cols()
            )));
        }
        if self.bounds1.len() != k + 1 || self.bounds2.len() != k + 1 {
            return Err(Error::Data(format!(
                "clip bounds must have {} entries, got {} and {}",
                k + 1,
                self.bounds1.len(),
                self.bounds2.len()
            )));
        }
        if self.labels.data().iter().any(|&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::Data("preference labels must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Summed reward per clip: forward all rows, then segment-sum by clip.
pub fn clip_utilities(
    tape: &mut Tape<Real>,
    reward: &TapedMlp,
    x: &Tensor<Real>,
    bounds: &[usize],
) -> Result<Var> {
    let xv = tape.constant(x.clone());
    let r = reward.forward(tape, xv)?;
    Ok(tape.segment_sum(r, bounds.to_vec()))
}

/// Bradley-Terry negative log-likelihood over labeled clip pairs:
/// `-mean[c log sigmoid(G1 - G2) + (1 - c) log sigmoid(G2 - G1)]`,
/// with `log sigmoid(z) = -softplus(-z)` throughout.
pub fn preference_loss(
    tape: &mut Tape<Real>,
    reward: &TapedMlp,
    batch: &PairedClipBatch,
) -> Result<Var> {
    batch.validate()?;
    let g1 = clip_utilities(tape, reward, &batch.x1, &batch.bounds1)?;
    let g2 = clip_utilities(tape, reward, &batch.x2, &batch.bounds2)?;
    let d = tape.sub(g1, g2);
    let neg_d = tape.neg(d);
    let sp_pos = tape.softplus(neg_d);
    let logsig_d = tape.neg(sp_pos);
    let sp_neg = tape.softplus(d);
    let logsig_neg_d = tape.neg(sp_neg);

    let c = tape.constant(batch.labels.clone());
    let one_minus_c = tape.constant(batch.labels.map(|v| 1.0 - v));
    let t1 = tape.mul(c, logsig_d);
    let t2 = tape.mul(one_minus_c, logsig_neg_d);
    let ll = tape.add(t1, t2);
    let mean_ll = tape.mean(ll);
    Ok(tape.neg(mean_ll))
}

fn validate_pairing(x_data: &Tensor<Real>, x_replay: &Tensor<Real>) -> Result<()> {
    if x_data.rows() != x_replay.rows() || x_data.cols() != x_replay.cols() {
        return Err(Error::ShapeMismatch(format!(
            "paired batches must match: {}x{} vs {}x{}",
            x_data.rows(),
            x_data.cols(),
            x_replay.rows(),
            x_replay.cols()
        )));
    }
    if x_data.rows() == 0 {
        return Err(Error::Data("virtual preference batch is empty".into()));
    }
    Ok(())
}

/// Virtual-preference loss: `mean softplus(-(r(x) - r(x')))`, i.e. the
/// negative log-likelihood of "offline x beats behavior x'" for every pair.
pub fn virtual_pref_loss(
    tape: &mut Tape<Real>,
    reward: &TapedMlp,
    x_data: &Tensor<Real>,
    x_replay: &Tensor<Real>,
) -> Result<Var> {
    validate_pairing(x_data, x_replay)?;
    let xd = tape.constant(x_data.clone());
    let xr = tape.constant(x_replay.clone());
    let rd = reward.forward(tape, xd)?;
    let rr = reward.forward(tape, xr)?;
    let d = tape.sub(rd, rr);
    let neg_d = tape.neg(d);
    let sp = tape.softplus(neg_d);
    Ok(tape.mean(sp))
}

/// Shared forward pass for the reliability-weighted objectives.
struct ReliabilityForward {
    /// Reward difference r(x) - r(x'), on the reward graph.
    diff: Var,
    logit: Var,
    alpha: Var,
}

fn reliability_forward(
    tape: &mut Tape<Real>,
    reward: &TapedMlp,
    reliability: &TapedMlp,
    x_data: &Tensor<Real>,
    x_replay: &Tensor<Real>,
    replay_index: &Tensor<Real>,
    detach_reward_feature: bool,
) -> Result<ReliabilityForward> {
    validate_pairing(x_data, x_replay)?;
    let n = x_data.rows();
    if replay_index.shape() != (n, 1) {
        return Err(Error::ShapeMismatch(format!(
            "replay index feature must be {n}x1, got {}x{}",
            replay_index.rows(),
            replay_index.cols()
        )));
    }
    if replay_index.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Data(
            "replay index feature must be normalized to [0, 1]".into(),
        ));
    }
    let xd = tape.constant(x_data.clone());
    let xr = tape.constant(x_replay.clone());
    let rd = reward.forward(tape, xd)?;
    let rr = reward.forward(tape, xr)?;
    let diff = tape.sub(rd, rr);
    let feature_diff = if detach_reward_feature {
        tape.detach(diff)
    } else {
        diff
    };
    let index = tape.constant(replay_index.clone());
    let features = tape.concat_cols(feature_diff, index);
    let logit = reliability.forward(tape, features)?;
    let alpha = tape.sigmoid(logit);
    Ok(ReliabilityForward { diff, logit, alpha })
}

/// Per-pair probability that the virtual annotation is upheld:
/// `alpha sigmoid(dr) + (1 - alpha) sigmoid(-dr)`. Also returns the
/// reliabilities for diagnostics.
pub fn reliability_weighted_prob(
    tape: &mut Tape<Real>,
    reward: &TapedMlp,
    reliability: &TapedMlp,
    x_data: &Tensor<Real>,
    x_replay: &Tensor<Real>,
    replay_index: &Tensor<Real>,
    detach_reward_feature: bool,
) -> Result<(Var, Var)> {
    let fwd = reliability_forward(
        tape,
        reward,
        reliability,
        x_data,
        x_replay,
        replay_index,
        detach_reward_feature,
    )?;
    let sig_d = tape.sigmoid(fwd.diff);
    let neg_diff = tape.neg(fwd.diff);
    let sig_neg_d = tape.sigmoid(neg_diff);
    let ones = tape.constant(Tensor::full(x_data.rows(), 1, 1.0));
    let one_minus_alpha = tape.sub(ones, fwd.alpha);
    let t1 = tape.mul(fwd.alpha, sig_d);
    let t2 = tape.mul(one_minus_alpha, sig_neg_d);
    Ok((tape.add(t1, t2), fwd.alpha))
}

/// A reliability-aware loss value plus the batch-mean reliability.
pub struct ConsolidationLoss {
    pub loss: Var,
    pub mean_alpha: Real,
}

/// Negative mean log of [`reliability_weighted_prob`]; gradients reach both
/// networks.
pub fn reliability_weighted_loss(
    tape: &mut Tape<Real>,
    reward: &TapedMlp,
    reliability: &TapedMlp,
    x_data: &Tensor<Real>,
    x_replay: &Tensor<Real>,
    replay_index: &Tensor<Real>,
    detach_reward_feature: bool,
) -> Result<ConsolidationLoss> {
    let (prob, alpha) = reliability_weighted_prob(
        tape,
        reward,
        reliability,
        x_data,
        x_replay,
        replay_index,
        detach_reward_feature,
    )?;
    let mean_alpha = tape.value(alpha).sum() / x_data.rows() as Real;
    let log_p = tape.ln(prob);
    let mean_lp = tape.mean(log_p);
    Ok(ConsolidationLoss {
        loss: tape.neg(mean_lp),
        mean_alpha,
    })
}

/// Initialization objective: plain virtual-preference loss plus
/// `mean(-log alpha)`, pushing reliabilities toward 1 while the reward net
/// fits the unweighted virtual preferences. `-log sigmoid(logit)` is
/// evaluated as `softplus(-logit)`.
pub fn init_consolidation_loss(
    tape: &mut Tape<Real>,
    reward: &TapedMlp,
    reliability: &TapedMlp,
    x_data: &Tensor<Real>,
    x_replay: &Tensor<Real>,
    replay_index: &Tensor<Real>,
    detach_reward_feature: bool,
) -> Result<ConsolidationLoss> {
    let fwd = reliability_forward(
        tape,
        reward,
        reliability,
        x_data,
        x_replay,
        replay_index,
        detach_reward_feature,
    )?;
    let mean_alpha = tape.value(fwd.alpha).sum() / x_data.rows() as Real;
    let neg_d = tape.neg(fwd.diff);
    let sp = tape.softplus(neg_d);
    let virtual_term = tape.mean(sp);
    let neg_logit = tape.neg(fwd.logit);
    let neg_log_alpha = tape.softplus(neg_logit);
    let alpha_term = tape.mean(neg_log_alpha);
    Ok(ConsolidationLoss {
        loss: tape.add(virtual_term, alpha_term),
        mean_alpha,
    })
}
