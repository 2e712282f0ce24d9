//! Shared training loop.
//!
//! Every algorithm runs the same per-step sequence: one environment step,
//! then (for online reward learners) one reward step, then the policy
//! updates. The loop owns evaluation, checkpointing, and metric logging so
//! the algorithm modules only choose the reward phase and the cloning mode.

use rand::Rng;

use crate::data::{bc_batch, build_clip_batch, sample_rows};
use crate::envs::{make_env, Transition};
use crate::error::{Error, Result};
use crate::eval::policy_mean_return;
use crate::nn::{Adam, Tape};
use crate::reward::{
    init_consolidation_loss, preference_loss, reliability_weighted_loss, virtual_pref_loss,
    ReliabilityNet, RewardNet,
};
use crate::sac::{Batch, ReplayBuffer, SacAgent};
use crate::tensor::Tensor;
use crate::Real;

use super::{
    derived_rng, relabel_batch, save_checkpoint, LoadedData, MetricsLog, RewardLossLog, RunDir,
    TrainerConfig, EVAL_STREAM, TRAIN_STREAM,
};

/// One entry of the instrumented step log.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    Env,
    Reward,
    Policy,
}

/// Reward model with its optimizer state and optional reliability head.
pub struct OnlineReward {
    pub net: RewardNet,
    pub opt: Adam<Real>,
    pub reliability: Option<(ReliabilityNet, Adam<Real>)>,
    pub detach_feature: bool,
    /// Steps that use the initialization objective for the virtual term.
    pub k_init: u64,
}

/// Whether the reward net moves during the policy phase.
pub enum RewardPhase {
    Frozen(RewardNet),
    Online(OnlineReward),
}

impl RewardPhase {
    pub fn net(&self) -> &RewardNet {
        match self {
            RewardPhase::Frozen(net) => net,
            RewardPhase::Online(or) => &or.net,
        }
    }

    pub fn reliability_net(&self) -> Option<&ReliabilityNet> {
        match self {
            RewardPhase::Frozen(_) => None,
            RewardPhase::Online(or) => or.reliability.as_ref().map(|(net, _)| net),
        }
    }
}

/// Actor-side demonstration usage.
#[derive(Clone, Copy, Debug)]
pub enum BcMode {
    Off,
    /// Critic-filtered cloning term on every SAC update.
    CriticFiltered { weight: Real },
    /// Plain cloning updates alongside SAC for the first `k_init` steps.
    InitCloning { k_init: u64 },
}

/// Diagnostics from one reward step.
struct RewardStepStats {
    loss_pref: Real,
    loss_virtual: Real,
    mean_alpha: Option<Real>,
}

impl OnlineReward {
    /// One minimization step on preference loss plus the configured virtual
    /// term, updating the reward net (and reliability net, when present).
    fn step(
        &mut self,
        cfg: &TrainerConfig,
        data: &LoadedData,
        buffer: &ReplayBuffer,
        episode: usize,
        step: u64,
        rng: &mut rand_chacha::ChaCha20Rng,
    ) -> Result<RewardStepStats> {
        let chosen: Vec<usize> = (0..cfg.pref_batch)
            .map(|_| rng.gen_range(0..data.prefs.len()))
            .collect();
        let pref_batch = build_clip_batch(&data.ds, &data.clips, &data.prefs, &chosen)?;
        let x_data = sample_rows(&data.offline_x, cfg.virtual_batch, rng);
        let replay = buffer.sample_transitions(cfg.virtual_batch, rng)?;
        let width = data.ds.obs_dim + data.ds.act_dim;
        let mut x_replay = Vec::with_capacity(cfg.virtual_batch * width);
        let mut index = Vec::with_capacity(cfg.virtual_batch);
        let denom = episode.max(1) as Real;
        for t in &replay {
            x_replay.extend_from_slice(&t.state);
            x_replay.extend_from_slice(&t.action);
            index.push((t.traj_index as Real / denom).clamp(0.0, 1.0));
        }
        let x_replay = Tensor::new(cfg.virtual_batch, width, x_replay)?;
        let replay_index = Tensor::new(cfg.virtual_batch, 1, index)?;

        let mut tape = Tape::new();
        let treward = self.net.register(&mut tape);
        let loss_pref = preference_loss(&mut tape, &treward, &pref_batch)?;
        let (loss_virtual, mean_alpha, trel) = match &self.reliability {
            Some((rel, _)) => {
                let trel = rel.register(&mut tape);
                let cons = if step <= self.k_init {
                    init_consolidation_loss(
                        &mut tape,
                        &treward,
                        &trel,
                        &x_data,
                        &x_replay,
                        &replay_index,
                        self.detach_feature,
                    )?
                } else {
                    reliability_weighted_loss(
                        &mut tape,
                        &treward,
                        &trel,
                        &x_data,
                        &x_replay,
                        &replay_index,
                        self.detach_feature,
                    )?
                };
                (cons.loss, Some(cons.mean_alpha), Some(trel))
            }
            None => (
                virtual_pref_loss(&mut tape, &treward, &x_data, &x_replay)?,
                None,
                None,
            ),
        };
        let total = tape.add(loss_pref, loss_virtual);
        let loss_pref_val = tape.value(loss_pref).item()?;
        let loss_virtual_val = tape.value(loss_virtual).item()?;
        let mut grads = tape.backward(total)?;
        let gr = treward.grads(&mut grads, self.net.mlp());
        self.opt.step_mlp(self.net.mlp_mut(), &gr)?;
        self.net.power_iterate();
        if let (Some((rel, rel_opt)), Some(trel)) = (&mut self.reliability, trel) {
            let gl = trel.grads(&mut grads, rel.mlp());
            rel_opt.step_mlp(rel.mlp_mut(), &gl)?;
        }
        Ok(RewardStepStats {
            loss_pref: loss_pref_val,
            loss_virtual: loss_virtual_val,
            mean_alpha,
        })
    }
}

/// Demonstration minibatch drawn uniformly from the offline transitions.
fn demo_batch(data: &LoadedData, n: usize, rng: &mut rand_chacha::ChaCha20Rng) -> Result<Batch> {
    let refs: Vec<&Transition> = (0..n)
        .map(|_| {
            let (ti, si) = data.flat_index[rng.gen_range(0..data.flat_index.len())];
            &data.ds.trajectories[ti as usize].transitions[si as usize]
        })
        .collect();
    Batch::from_transitions(&refs)
}

/// What the loop hands back to the algorithm module.
pub struct LoopOutput {
    pub checkpoint_steps: Vec<u64>,
    pub final_return_raw: Real,
    /// Batch-mean reliability at the last reward step, when one exists.
    pub mean_alpha_final: Option<Real>,
    pub step_trace: Vec<StepKind>,
}

/// Runs the interaction loop: `total_steps` environment steps with reward
/// steps, policy updates, evaluation rows, and checkpoints interleaved on
/// their configured schedules.
#[allow(clippy::too_many_arguments)]
pub fn run_loop(
    cfg: &TrainerConfig,
    run: &RunDir,
    data: &LoadedData,
    agent: &mut SacAgent,
    phase: &mut RewardPhase,
    bc: BcMode,
    metrics: &mut MetricsLog,
    mut reward_log: Option<RewardLossLog>,
) -> Result<LoopOutput> {
    let mut env = make_env(&cfg.env)?;
    let mut eval_env = make_env(&cfg.env)?;
    let obs_dim = env.obs_dim();
    let act_dim = env.act_dim();
    let scale = cfg.scale();
    let mut rng = derived_rng(cfg.seed, TRAIN_STREAM, 0);
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, obs_dim, act_dim);
    let mut trace = Vec::new();
    let mut checkpoint_steps = Vec::new();
    let mut final_return_raw = Real::NAN;
    let mut mean_alpha_final = None;

    let mut state = env.reset(&mut rng);
    let mut episode = 0usize;
    for step in 1..=cfg.total_steps {
        let action = if step <= cfg.warmup_steps {
            (0..act_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        } else {
            agent.act_sampled(&state, &mut rng)?
        };
        let es = env.step(&action)?;
        // Episode ends are time limits, so the value bootstrap always applies.
        buffer.push(
            Transition {
                state: state.clone(),
                action: es.action,
                next_state: es.next_state.clone(),
                reward: es.reward,
                done: es.done,
                traj_index: episode,
            },
            false,
        )?;
        if es.done {
            state = env.reset(&mut rng);
            episode += 1;
        } else {
            state = es.next_state;
        }
        trace.push(StepKind::Env);

        if let RewardPhase::Online(or) = phase {
            if buffer.len() >= cfg.virtual_batch {
                let stats = or.step(cfg, data, &buffer, episode, step, &mut rng)?;
                metrics.loss_pref.push(stats.loss_pref);
                metrics.loss_virtual.push(stats.loss_virtual);
                if let Some(a) = stats.mean_alpha {
                    metrics.mean_alpha.push(a);
                }
                if let Some(log) = reward_log.as_mut() {
                    log.row(
                        step,
                        Some(stats.loss_pref),
                        Some(stats.loss_virtual),
                        stats.mean_alpha,
                    )?;
                }
                mean_alpha_final = stats.mean_alpha.or(mean_alpha_final);
                trace.push(StepKind::Reward);
            }
        }

        let mut policy_moved = false;
        if let BcMode::InitCloning { k_init } = bc {
            if step <= k_init {
                let (s, a) = bc_batch(&data.ds, cfg.batch_size, &mut rng)?;
                agent.bc_pretrain_step(&s, &a)?;
                policy_moved = true;
            }
        }
        if step > cfg.warmup_steps && buffer.len() >= cfg.batch_size {
            let mut batch = buffer.sample(cfg.batch_size, &mut rng)?;
            relabel_batch(&mut batch, phase.net())?;
            let stats = match bc {
                BcMode::CriticFiltered { weight } if weight != 0.0 => {
                    let demo = demo_batch(data, cfg.batch_size, &mut rng)?;
                    agent.update_with_bc(&batch, Some(&demo), weight, &mut rng)?
                }
                _ => agent.update(&batch, &mut rng)?,
            };
            metrics.critic_loss.push(stats.critic_loss);
            metrics.actor_loss.push(stats.actor_loss);
            metrics.temperature.push(stats.alpha);
            policy_moved = true;
        }
        if policy_moved {
            trace.push(StepKind::Policy);
        }

        if step % cfg.eval_interval == 0 {
            let mut eval_rng = derived_rng(cfg.seed, EVAL_STREAM, step);
            let raw = policy_mean_return(
                eval_env.as_mut(),
                agent.actor(),
                cfg.eval_episodes,
                false,
                &mut eval_rng,
            )?;
            metrics.eval_row(step, raw, scale.normalize(raw))?;
            if step == cfg.total_steps {
                final_return_raw = raw;
            }
        }

        if step % cfg.checkpoint_interval == 0 {
            let (q1, q2) = agent.critics();
            save_checkpoint(
                &run.checkpoint_path(step),
                agent.actor(),
                q1,
                q2,
                phase.net(),
                phase.reliability_net(),
            )?;
            checkpoint_steps.push(step);
        }
    }
    if let Some(log) = reward_log {
        log.finish()?;
    }
    if !final_return_raw.is_finite() {
        return Err(Error::Train("final evaluation never ran".into()));
    }
    Ok(LoopOutput {
        checkpoint_steps,
        final_return_raw,
        mean_alpha_final,
        step_trace: trace,
    })
}

/// Checks that a step trace is well formed: the sequence is a concatenation
/// of blocks, each an `Env` step optionally followed by one `Reward` and
/// then optionally one `Policy` entry. Returns the (env, reward, policy)
/// counts.
pub fn validate_trace(trace: &[StepKind]) -> Result<(u64, u64, u64)> {
    let mut counts = (0u64, 0u64, 0u64);
    let mut last = None;
    for (i, &kind) in trace.iter().enumerate() {
        let ok = match kind {
            StepKind::Env => {
                counts.0 += 1;
                true
            }
            StepKind::Reward => {
                counts.1 += 1;
                last == Some(StepKind::Env)
            }
            StepKind::Policy => {
                counts.2 += 1;
                matches!(last, Some(StepKind::Env) | Some(StepKind::Reward))
            }
        };
        if !ok {
            return Err(Error::Train(format!(
                "step {i} breaks the env/reward/policy ordering: {kind:?} after {last:?}"
            )));
        }
        last = Some(kind);
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_validator_accepts_legal_blocks() {
        use StepKind::*;
        let trace = [Env, Env, Reward, Env, Reward, Policy, Env, Policy];
        let (e, r, p) = validate_trace(&trace).unwrap();
        assert_eq!((e, r, p), (4, 2, 2));
    }

    #[test]
    fn trace_validator_rejects_inversions() {
        use StepKind::*;
        assert!(validate_trace(&[Env, Policy, Reward]).is_err());
        assert!(validate_trace(&[Reward, Env]).is_err());
        assert!(validate_trace(&[Env, Reward, Reward]).is_err());
        assert!(validate_trace(&[Env, Policy, Policy]).is_err());
    }
}
