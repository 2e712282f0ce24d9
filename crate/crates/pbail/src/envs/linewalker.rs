//! A 1-D momentum task: drive as fast as possible to the right while paying
//! a quadratic action cost.
//!
//! State is `(position, velocity)`; the scalar action in `[-1, 1]` feeds a
//! damped velocity update:
//!
//! ```text
//! velocity' = 0.9 * velocity + 0.5 * action
//! position' = position + velocity'
//! reward    = velocity' - 0.1 * action^2
//! ```
//!
//! Episodes always start at `(0, 0)` and run for a fixed 100 steps. The
//! optimal behavior is to hold the action at its upper bound.

use rand_chacha::ChaCha20Rng;

use crate::envs::{clip_action, ContinuousEnv, EnvStep};
use crate::error::{Error, Result};
use crate::Real;

const VEL_DECAY: Real = 0.9;
const ACCEL: Real = 0.5;
const ACTION_COST: Real = 0.1;
const HORIZON: usize = 100;

/// See the module docs for dynamics and reward.
#[derive(Clone, Debug, Default)]
pub struct LineWalker {
    state: Option<[Real; 2]>,
    steps: usize,
}

impl LineWalker {
    pub fn new() -> Self {
        Self::default()
    }
}

impl ContinuousEnv for LineWalker {
    fn name(&self) -> &'static str {
        "linewalker"
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn act_dim(&self) -> usize {
        1
    }

    fn horizon(&self) -> usize {
        HORIZON
    }

    fn reset(&mut self, _rng: &mut ChaCha20Rng) -> Vec<Real> {
        self.state = Some([0.0, 0.0]);
        self.steps = 0;
        vec![0.0, 0.0]
    }

    fn step(&mut self, action: &[Real]) -> Result<EnvStep> {
        let state = self
            .state
            .ok_or_else(|| Error::Env("step before reset or after episode end".into()))?;
        if action.len() != 1 {
            return Err(Error::Env(format!(
                "linewalker expects 1 action dim, got {}",
                action.len()
            )));
        }
        let action = clip_action(action);
        let a = action[0];
        let vel = VEL_DECAY * state[1] + ACCEL * a;
        let pos = state[0] + vel;
        let reward = vel - ACTION_COST * a * a;
        self.steps += 1;
        let done = self.steps >= HORIZON;
        if done {
            self.state = None;
        } else {
            self.state = Some([pos, vel]);
        }
        Ok(EnvStep {
            action,
            next_state: vec![pos, vel],
            reward,
            done,
        })
    }

    fn reward(&self, state: &[Real], action: &[Real], _next_state: &[Real]) -> Real {
        let a = action[0].clamp(-1.0, 1.0);
        let vel = VEL_DECAY * state[1] + ACCEL * a;
        vel - ACTION_COST * a * a
    }
}
