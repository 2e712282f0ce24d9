//! Soft actor-critic with automatic temperature tuning.
//!
//! One [`SacAgent::update`] performs the usual three coupled steps on a
//! sampled batch: twin critics regress a soft Bellman target computed from
//! target networks, the actor maximizes the entropy-regularized minimum
//! critic value through the reparameterization trick, and the temperature
//! follows a gradient toward the target entropy. Target critics trail the
//! online ones by Polyak averaging.
//!
//! [`SacAgent::update_with_bc`] adds an optional behavior-cloning term on
//! demonstration batches, gated per sample by a twin-critic filter: cloning
//! only applies where the critics rate the demonstrated action strictly
//! above a freshly sampled policy action.

pub mod actor;
pub mod replay;

use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, Mlp, OutputActivation, Tape};
use crate::tensor::Tensor;
use crate::Real;

pub use actor::{policy_eval, policy_taped, sample_noise};
pub use replay::{Batch, ReplayBuffer};

#[derive(Clone, Debug)]
pub struct SacConfig {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub hidden: Vec<usize>,
    pub gamma: Real,
    /// Polyak rate for target critics.
    pub tau: Real,
    pub lr: Real,
    pub init_temperature: Real,
    pub target_entropy: Real,
}

impl SacConfig {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            hidden: vec![64, 64],
            gamma: 0.99,
            tau: 0.005,
            lr: 3e-4,
            init_temperature: 0.1,
            target_entropy: -(act_dim as Real),
        }
    }
}

/// Diagnostics from one update.
#[derive(Clone, Copy, Debug)]
pub struct SacStats {
    pub critic_loss: Real,
    pub actor_loss: Real,
    /// Mean cloning NLL over filtered samples, when a demo batch was given
    /// and the filter kept at least one.
    pub bc_loss: Option<Real>,
    /// Demo samples that passed the critic filter.
    pub bc_active: usize,
    pub alpha: Real,
    /// Monte Carlo entropy estimate, `-mean log pi`.
    pub entropy: Real,
}

pub struct SacAgent {
    cfg: SacConfig,
    actor: Mlp<Real>,
    q1: Mlp<Real>,
    q2: Mlp<Real>,
    q1_target: Mlp<Real>,
    q2_target: Mlp<Real>,
    log_alpha: Tensor<Real>,
    actor_opt: Adam<Real>,
    q1_opt: Adam<Real>,
    q2_opt: Adam<Real>,
    alpha_opt: Adam<Real>,
}

impl SacAgent {
    pub fn new(cfg: SacConfig, rng: &mut ChaCha20Rng) -> Result<Self> {
        if cfg.obs_dim == 0 || cfg.act_dim == 0 || cfg.hidden.is_empty() {
            return Err(Error::Config("SAC needs nonzero dims and hidden sizes".into()));
        }
        if cfg.init_temperature <= 0.0 {
            return Err(Error::Config("initial temperature must be positive".into()));
        }
        let mut actor_dims = vec![cfg.obs_dim];
        actor_dims.extend(&cfg.hidden);
        actor_dims.push(2 * cfg.act_dim);
        let mut q_dims = vec![cfg.obs_dim + cfg.act_dim];
        q_dims.extend(&cfg.hidden);
        q_dims.push(1);

        let actor = Mlp::new(
            &actor_dims,
            Activation::Relu,
            OutputActivation::Identity,
            false,
            rng,
        )?;
        let q1 = Mlp::new(&q_dims, Activation::Relu, OutputActivation::Identity, false, rng)?;
        let q2 = Mlp::new(&q_dims, Activation::Relu, OutputActivation::Identity, false, rng)?;
        let q1_target = q1.clone();
        let q2_target = q2.clone();

        let actor_opt = Adam::for_mlp(cfg.lr, 0.0, &actor);
        let q1_opt = Adam::for_mlp(cfg.lr, 0.0, &q1);
        let q2_opt = Adam::for_mlp(cfg.lr, 0.0, &q2);
        let alpha_opt = Adam::new(cfg.lr, 0.0, &[(1, 1)]);
        Ok(Self {
            log_alpha: Tensor::scalar(cfg.init_temperature.ln()),
            cfg,
            actor,
            q1,
            q2,
            q1_target,
            q2_target,
            actor_opt,
            q1_opt,
            q2_opt,
            alpha_opt,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn alpha(&self) -> Real {
        self.log_alpha.data()[0].exp()
    }

    pub fn actor(&self) -> &Mlp<Real> {
        &self.actor
    }

    /// Online critics, in order.
    pub fn critics(&self) -> (&Mlp<Real>, &Mlp<Real>) {
        (&self.q1, &self.q2)
    }

    /// Replaces the policy network, for loading from a checkpoint.
    pub fn set_actor(&mut self, actor: Mlp<Real>) -> Result<()> {
        if actor.dims() != self.actor.dims() {
            return Err(Error::ShapeMismatch(format!(
                "actor dims {:?} do not match agent {:?}",
                actor.dims(),
                self.actor.dims()
            )));
        }
        self.actor = actor;
        Ok(())
    }

    /// Samples a stochastic action for one state.
    pub fn act_sampled(&self, state: &[Real], rng: &mut ChaCha20Rng) -> Result<Vec<Real>> {
        let states = Tensor::row(state);
        let noise = sample_noise(1, self.cfg.act_dim, rng);
        let (actions, _) = policy_eval(&self.actor, &states, self.cfg.act_dim, Some(&noise))?;
        Ok(actions.data().to_vec())
    }

    /// Deterministic mode action for one state.
    pub fn act_mode(&self, state: &[Real]) -> Result<Vec<Real>> {
        let states = Tensor::row(state);
        let (actions, _) = policy_eval(&self.actor, &states, self.cfg.act_dim, None)?;
        Ok(actions.data().to_vec())
    }

    /// Minimum of the two online critics at given state-action pairs.
    fn min_q_eval(&self, states: &Tensor<Real>, actions: &Tensor<Real>) -> Result<Vec<Real>> {
        let q_in = states.hcat(actions)?;
        let a = self.q1.eval(&q_in)?;
        let b = self.q2.eval(&q_in)?;
        Ok(a.data().iter().zip(b.data()).map(|(&x, &y)| x.min(y)).collect())
    }

    /// Soft Bellman targets `r + gamma * not_done * (min Q_target - alpha log pi)`.
    fn compute_targets(&self, batch: &Batch, rng: &mut ChaCha20Rng) -> Result<Tensor<Real>> {
        let n = batch.len();
        let noise = sample_noise(n, self.cfg.act_dim, rng);
        let (next_actions, next_logp) =
            policy_eval(&self.actor, &batch.next_states, self.cfg.act_dim, Some(&noise))?;
        let q_in = batch.next_states.hcat(&next_actions)?;
        let q1t = self.q1_target.eval(&q_in)?;
        let q2t = self.q2_target.eval(&q_in)?;
        let alpha = self.alpha();
        let mut y = Tensor::zeros(n, 1);
        for r in 0..n {
            let soft_q = q1t.get(r, 0).min(q2t.get(r, 0)) - alpha * next_logp.get(r, 0);
            y.set(
                r,
                0,
                batch.rewards.get(r, 0) + self.cfg.gamma * batch.not_done.get(r, 0) * soft_q,
            );
        }
        Ok(y)
    }

    /// Standard update without demonstrations.
    pub fn update(&mut self, batch: &Batch, rng: &mut ChaCha20Rng) -> Result<SacStats> {
        self.update_with_bc(batch, None, 0.0, rng)
    }

    /// Full update; when `demo` is present, adds `bc_weight` times the
    /// critic-filtered cloning NLL to the actor objective.
    pub fn update_with_bc(
        &mut self,
        batch: &Batch,
        demo: Option<&Batch>,
        bc_weight: Real,
        rng: &mut ChaCha20Rng,
    ) -> Result<SacStats> {
        let targets = self.compute_targets(batch, rng)?;

        // Critics.
        let q_in = batch.states.hcat(&batch.actions)?;
        let mut tape = Tape::new();
        let tq1 = self.q1.register(&mut tape);
        let tq2 = self.q2.register(&mut tape);
        let q_in_v = tape.constant(q_in);
        let y = tape.constant(targets);
        let p1 = tq1.forward(&mut tape, q_in_v)?;
        let p2 = tq2.forward(&mut tape, q_in_v)?;
        let d1 = tape.sub(p1, y);
        let d2 = tape.sub(p2, y);
        let s1 = tape.square(d1);
        let s2 = tape.square(d2);
        let l1 = tape.mean(s1);
        let l2 = tape.mean(s2);
        let critic_loss = tape.add(l1, l2);
        let critic_loss_val = tape.value(critic_loss).item()?;
        let mut grads = tape.backward(critic_loss)?;
        let g1 = tq1.grads(&mut grads, &self.q1);
        let g2 = tq2.grads(&mut grads, &self.q2);
        self.q1_opt.step_mlp(&mut self.q1, &g1)?;
        self.q2_opt.step_mlp(&mut self.q2, &g2)?;

        // Demonstration filter, decided before the actor moves.
        let filtered_demo = match demo {
            Some(demo) if !demo.is_empty() => {
                let noise = sample_noise(demo.len(), self.cfg.act_dim, rng);
                let (pi_actions, _) =
                    policy_eval(&self.actor, &demo.states, self.cfg.act_dim, Some(&noise))?;
                let q_data = self.min_q_eval(&demo.states, &demo.actions)?;
                let q_pi = self.min_q_eval(&demo.states, &pi_actions)?;
                let keep: Vec<usize> = (0..demo.len())
                    .filter(|&r| q_data[r] > q_pi[r])
                    .collect();
                if keep.is_empty() {
                    None
                } else {
                    let mut s = Vec::new();
                    let mut a = Vec::new();
                    for &r in &keep {
                        s.extend_from_slice(demo.states.row_slice(r));
                        a.extend_from_slice(demo.actions.row_slice(r));
                    }
                    Some((
                        Tensor::new(keep.len(), self.cfg.obs_dim, s)?,
                        Tensor::new(keep.len(), self.cfg.act_dim, a)?,
                    ))
                }
            }
            _ => None,
        };
        let bc_active = filtered_demo.as_ref().map_or(0, |(s, _)| s.rows());

        // Actor, with critics frozen on the tape.
        let alpha = self.alpha();
        let mut tape = Tape::new();
        let ta = self.actor.register(&mut tape);
        let fq1 = self.q1.register_frozen(&mut tape);
        let fq2 = self.q2.register_frozen(&mut tape);
        let sv = tape.constant(batch.states.clone());
        let noise = sample_noise(batch.len(), self.cfg.act_dim, rng);
        let (actions, logp) = policy_taped(&mut tape, &ta, sv, self.cfg.act_dim, &noise)?;
        let q_input = tape.concat_cols(sv, actions);
        let qv1 = fq1.forward(&mut tape, q_input)?;
        let qv2 = fq2.forward(&mut tape, q_input)?;
        let qmin = tape.min_elem(qv1, qv2);
        let ent_term = tape.scale(logp, alpha);
        let gap = tape.sub(ent_term, qmin);
        let sac_loss = tape.mean(gap);
        let (actor_loss, bc_loss_val) = match &filtered_demo {
            Some((s, a)) => {
                let bc = actor::bc_nll_taped(&mut tape, &ta, s, a)?;
                let bc_val = tape.value(bc).item()?;
                let scaled = tape.scale(bc, bc_weight);
                (tape.add(sac_loss, scaled), Some(bc_val))
            }
            None => (sac_loss, None),
        };
        let actor_loss_val = tape.value(actor_loss).item()?;
        let logp_mean = tape.value(logp).sum() / batch.len() as Real;
        let mut grads = tape.backward(actor_loss)?;
        let ga = ta.grads(&mut grads, &self.actor);
        self.actor_opt.step_mlp(&mut self.actor, &ga)?;

        // Temperature: d/d log_alpha of -log_alpha * (log pi + target).
        let alpha_grad = -(logp_mean + self.cfg.target_entropy);
        self.alpha_opt.step(
            &mut [&mut self.log_alpha],
            &[Tensor::scalar(alpha_grad)],
            &[false],
        )?;

        self.q1_target.blend_from(&self.q1, self.cfg.tau);
        self.q2_target.blend_from(&self.q2, self.cfg.tau);

        Ok(SacStats {
            critic_loss: critic_loss_val,
            actor_loss: actor_loss_val,
            bc_loss: bc_loss_val,
            bc_active,
            alpha: self.alpha(),
            entropy: -logp_mean,
        })
    }

    /// One behavior-cloning step on the actor alone. Returns the mean NLL.
    pub fn bc_pretrain_step(
        &mut self,
        states: &Tensor<Real>,
        actions: &Tensor<Real>,
    ) -> Result<Real> {
        let mut tape = Tape::new();
        let ta = self.actor.register(&mut tape);
        let loss = actor::bc_nll_taped(&mut tape, &ta, states, actions)?;
        let value = tape.value(loss).item()?;
        let mut grads = tape.backward(loss)?;
        let ga = ta.grads(&mut grads, &self.actor);
        self.actor_opt.step_mlp(&mut self.actor, &ga)?;
        Ok(value)
    }
}
