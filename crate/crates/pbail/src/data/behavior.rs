//! Behavior checkpoint training: runs a ground-truth SAC agent, snapshots
//! the actor at a fixed cadence, and picks the first snapshot whose
//! evaluation return crosses each requested fraction of final performance.
//!
//! Returns are placed on a normalized scale where 0 is a uniform-random
//! policy and 1 is the fully trained agent from the same run, so that a
//! threshold like 0.2 means "20% of the way from random to trained".
//! Selected snapshots are re-verified with a larger, fresh evaluation
//! before they are accepted.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{make_env, Transition};
use crate::error::{Error, Result};
use crate::eval::{policy_mean_return, random_policy_mean_return, ReturnScale};
use crate::nn::Mlp;
use crate::sac::{ReplayBuffer, SacAgent, SacConfig};
use crate::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BehaviorConfig {
    pub total_steps: u64,
    /// Environment steps with uniform random actions before updates start.
    pub warmup_steps: u64,
    /// Snapshot and evaluate the actor every this many steps.
    pub eval_interval: u64,
    /// Episodes per in-training evaluation.
    pub eval_episodes: usize,
    /// Episodes for re-verification and for the random/final references.
    pub verify_episodes: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub replay_capacity: usize,
    pub lr: Real,
}

impl BehaviorConfig {
    pub fn desk_default() -> Self {
        Self {
            total_steps: 12_000,
            warmup_steps: 500,
            // Fine enough that the first crossing snapshot sits near its
            // threshold even when learning is fast.
            eval_interval: 100,
            eval_episodes: 10,
            verify_episodes: 20,
            batch_size: 256,
            hidden: vec![64, 64],
            replay_capacity: 100_000,
            lr: 3e-4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        if self.eval_interval == 0 || self.eval_interval > self.total_steps {
            return Err(Error::Config(format!(
                "eval_interval {} must be in 1..={}",
                self.eval_interval, self.total_steps
            )));
        }
        if self.warmup_steps >= self.total_steps {
            return Err(Error::Config("warmup consumes the whole budget".into()));
        }
        if self.eval_episodes == 0 || self.verify_episodes == 0 {
            return Err(Error::Config("evaluation episode counts must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.replay_capacity < self.batch_size {
            return Err(Error::Config("replay capacity below batch size".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Offline data quality tier: which performance thresholds contribute
/// source policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataVersion {
    /// Early-training behavior only.
    Novice,
    /// Early- plus mid-training behavior.
    Mixture,
}

impl DataVersion {
    pub fn thresholds(self) -> &'static [Real] {
        match self {
            DataVersion::Novice => &[0.2],
            DataVersion::Mixture => &[0.2, 0.5],
        }
    }
}

impl fmt::Display for DataVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataVersion::Novice => "novice",
            DataVersion::Mixture => "mixture",
        })
    }
}

impl FromStr for DataVersion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "novice" => Ok(DataVersion::Novice),
            "mixture" => Ok(DataVersion::Mixture),
            other => Err(Error::Config(format!(
                "unknown data version {other:?} (expected novice or mixture)"
            ))),
        }
    }
}

/// An accepted behavior snapshot.
#[derive(Clone, Debug)]
pub struct BehaviorCheckpoint {
    /// The requested performance fraction this snapshot satisfies.
    pub threshold: Real,
    /// Environment step at which the snapshot was taken.
    pub step: u64,
    pub actor: Mlp<Real>,
    /// Verified mean return over `verify_episodes` fresh episodes.
    pub raw_return: Real,
    pub normalized_return: Real,
}

/// Everything produced by one behavior-training run.
#[derive(Clone, Debug)]
pub struct BehaviorTraining {
    /// One entry per requested threshold, in request order.
    pub checkpoints: Vec<BehaviorCheckpoint>,
    pub random_return: Real,
    pub final_return: Real,
    pub final_actor: Mlp<Real>,
    pub scale: ReturnScale,
    /// (step, mean mode return) at every evaluation point.
    pub eval_history: Vec<(u64, Real)>,
}

struct Snapshot {
    step: u64,
    eval_return: Real,
    actor: Mlp<Real>,
}

/// Trains a ground-truth SAC agent on `env_name` and extracts one actor
/// checkpoint per threshold. Thresholds are fractions in (0, 1] of the
/// random-to-final return range, measured on policy-mode rollouts.
pub fn train_behavior_checkpoints(
    env_name: &str,
    thresholds: &[Real],
    seed: u64,
    cfg: &BehaviorConfig,
) -> Result<BehaviorTraining> {
    cfg.validate()?;
    if thresholds.is_empty() {
        return Err(Error::Config("no thresholds requested".into()));
    }
    for &t in thresholds {
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::Config(format!("threshold {t} outside (0, 1]")));
        }
    }

    let mut env = make_env(env_name)?;
    let mut eval_env = make_env(env_name)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let obs_dim = env.obs_dim();
    let act_dim = env.act_dim();

    let random_return = random_policy_mean_return(eval_env.as_mut(), cfg.verify_episodes, &mut rng)?;

    let mut sac_cfg = SacConfig::new(obs_dim, act_dim);
    sac_cfg.hidden = cfg.hidden.clone();
    sac_cfg.lr = cfg.lr;
    let mut agent = SacAgent::new(sac_cfg, &mut rng)?;
    let mut buffer = ReplayBuffer::new(cfg.replay_capacity, obs_dim, act_dim);

    let mut snapshots: Vec<Snapshot> = Vec::new();
    let mut episode = 0usize;
    let mut state = env.reset(&mut rng);
    for step in 1..=cfg.total_steps {
        let action = if step <= cfg.warmup_steps {
            (0..act_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        } else {
            agent.act_sampled(&state, &mut rng)?
        };
        let env_step = env.step(&action)?;
        // Fixed-horizon tasks end by timeout, so bootstrapping stays on.
        buffer.push(
            Transition {
                state: state.clone(),
                action: env_step.action,
                next_state: env_step.next_state.clone(),
                reward: env_step.reward,
                done: env_step.done,
                traj_index: episode,
            },
            false,
        )?;
        if env_step.done {
            episode += 1;
            state = env.reset(&mut rng);
        } else {
            state = env_step.next_state;
        }

        if step > cfg.warmup_steps && buffer.len() >= cfg.batch_size {
            let batch = buffer.sample(cfg.batch_size, &mut rng)?;
            agent.update(&batch, &mut rng)?;
        }

        if step % cfg.eval_interval == 0 {
            let eval_return =
                policy_mean_return(eval_env.as_mut(), agent.actor(), cfg.eval_episodes, false, &mut rng)?;
            snapshots.push(Snapshot {
                step,
                eval_return,
                actor: agent.actor().clone(),
            });
        }
    }
    if snapshots.last().map(|s| s.step) != Some(cfg.total_steps) {
        let eval_return =
            policy_mean_return(eval_env.as_mut(), agent.actor(), cfg.eval_episodes, false, &mut rng)?;
        snapshots.push(Snapshot {
            step: cfg.total_steps,
            eval_return,
            actor: agent.actor().clone(),
        });
    }

    let final_actor = agent.actor().clone();
    let final_return =
        policy_mean_return(eval_env.as_mut(), &final_actor, cfg.verify_episodes, false, &mut rng)?;
    let scale = ReturnScale::new(random_return, final_return)?;

    let mut checkpoints = Vec::with_capacity(thresholds.len());
    for &threshold in thresholds {
        let target = scale.denormalize(threshold);
        let mut accepted = None;
        for snap in &snapshots {
            if snap.eval_return < target {
                continue;
            }
            let verified = policy_mean_return(
                eval_env.as_mut(),
                &snap.actor,
                cfg.verify_episodes,
                false,
                &mut rng,
            )?;
            if verified >= target {
                accepted = Some(BehaviorCheckpoint {
                    threshold,
                    step: snap.step,
                    actor: snap.actor.clone(),
                    raw_return: verified,
                    normalized_return: scale.normalize(verified),
                });
                break;
            }
        }
        match accepted {
            Some(cp) => checkpoints.push(cp),
            None => {
                return Err(Error::Train(format!(
                    "seed {seed} never reached threshold {threshold} on {env_name} \
                     within {} steps",
                    cfg.total_steps
                )));
            }
        }
    }

    Ok(BehaviorTraining {
        checkpoints,
        random_return,
        final_return,
        final_actor,
        scale,
        eval_history: snapshots.iter().map(|s| (s.step, s.eval_return)).collect(),
    })
}
