//! A 2-D reaching task: steer a damped point mass to a fixed goal.
//!
//! State is `(position, velocity)` in the plane, action is an acceleration
//! in `[-1, 1]^2`:
//!
//! ```text
//! velocity' = 0.9 * velocity + 0.2 * action
//! position' = position + 0.25 * velocity'
//! reward    = -|position' - goal| - 0.05 * |action|^2
//! ```
//!
//! Episodes run 60 steps from a uniformly random start position with zero
//! velocity. Returns are negative; reaching and holding the goal with small
//! actions is optimal. Because starts are spread over a box while competent
//! trajectories funnel toward the goal, a reward model fitted only on
//! competent demonstrations sees states far from anything it was trained on
//! whenever a weak policy wanders; that makes this the harder task for
//! ranking early-stage policies.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::envs::{clip_action, ContinuousEnv, EnvStep};
use crate::error::{Error, Result};
use crate::Real;

const VEL_DECAY: Real = 0.9;
const ACCEL: Real = 0.2;
const POS_STEP: Real = 0.25;
const ACTION_COST: Real = 0.05;
const HORIZON: usize = 60;
const GOAL: [Real; 2] = [1.0, 1.0];
const START_HALF_WIDTH: Real = 0.5;

/// See the module docs for dynamics and reward.
#[derive(Clone, Debug, Default)]
pub struct PointReach {
    state: Option<[Real; 4]>,
    steps: usize,
}

impl PointReach {
    pub fn new() -> Self {
        Self::default()
    }

    fn next_state(state: &[Real], action: &[Real]) -> [Real; 4] {
        let vx = VEL_DECAY * state[2] + ACCEL * action[0];
        let vy = VEL_DECAY * state[3] + ACCEL * action[1];
        let px = state[0] + POS_STEP * vx;
        let py = state[1] + POS_STEP * vy;
        [px, py, vx, vy]
    }

    fn reward_at(next: &[Real], action: &[Real]) -> Real {
        let dx = next[0] - GOAL[0];
        let dy = next[1] - GOAL[1];
        let dist = (dx * dx + dy * dy).sqrt();
        let cost = action[0] * action[0] + action[1] * action[1];
        -dist - ACTION_COST * cost
    }
}

impl ContinuousEnv for PointReach {
    fn name(&self) -> &'static str {
        "pointreach"
    }

    fn obs_dim(&self) -> usize {
        4
    }

    fn act_dim(&self) -> usize {
        2
    }

    fn horizon(&self) -> usize {
        HORIZON
    }

    fn reset(&mut self, rng: &mut ChaCha20Rng) -> Vec<Real> {
        let px = rng.gen_range(-START_HALF_WIDTH..=START_HALF_WIDTH);
        let py = rng.gen_range(-START_HALF_WIDTH..=START_HALF_WIDTH);
        let state = [px, py, 0.0, 0.0];
        self.state = Some(state);
        self.steps = 0;
        state.to_vec()
    }

    fn step(&mut self, action: &[Real]) -> Result<EnvStep> {
        let state = self
            .state
            .ok_or_else(|| Error::Env("step before reset or after episode end".into()))?;
        if action.len() != 2 {
            return Err(Error::Env(format!(
                "pointreach expects 2 action dims, got {}",
                action.len()
            )));
        }
        let action = clip_action(action);
        let next = Self::next_state(&state, &action);
        let reward = Self::reward_at(&next, &action);
        self.steps += 1;
        let done = self.steps >= HORIZON;
        if done {
            self.state = None;
        } else {
            self.state = Some(next);
        }
        Ok(EnvStep {
            action,
            next_state: next.to_vec(),
            reward,
            done,
        })
    }

    fn reward(&self, state: &[Real], action: &[Real], _next_state: &[Real]) -> Real {
        let action = clip_action(action);
        let next = Self::next_state(state, &action);
        Self::reward_at(&next, &action)
    }
}
