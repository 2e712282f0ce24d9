//! Control environments: two continuous toy tasks with oracle rewards and a
//! tabular MDP used by the theory checks.

pub mod linewalker;
pub mod pointreach;
pub mod tabular;

use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::Real;

pub use linewalker::LineWalker;
pub use pointreach::PointReach;
pub use tabular::{TabularMdp, TabularPolicy};

/// One environment step as seen by a learner.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvStep {
    /// Action actually applied, after clipping to `[-1, 1]` per dimension.
    pub action: Vec<Real>,
    pub next_state: Vec<Real>,
    /// Ground-truth reward; learners must not read this during
    /// preference-based training.
    pub reward: Real,
    /// True when the episode ended with this step (horizon reached).
    pub done: bool,
}

/// A continuous-state, continuous-action episodic task with actions in
/// `[-1, 1]^act_dim` and a fixed horizon.
pub trait ContinuousEnv: Send {
    fn name(&self) -> &'static str;
    fn obs_dim(&self) -> usize;
    fn act_dim(&self) -> usize;
    fn horizon(&self) -> usize;

    /// Starts a new episode and returns the initial state.
    fn reset(&mut self, rng: &mut ChaCha20Rng) -> Vec<Real>;

    /// Advances one step. Errors when called before `reset` or after the
    /// episode has ended.
    fn step(&mut self, action: &[Real]) -> Result<EnvStep>;

    /// Oracle reward as a pure function of a transition.
    fn reward(&self, state: &[Real], action: &[Real], next_state: &[Real]) -> Real;
}

/// One stored transition.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<Real>,
    pub action: Vec<Real>,
    pub next_state: Vec<Real>,
    /// Ground-truth reward (oracle-only; hidden from reward learners).
    pub reward: Real,
    pub done: bool,
    /// Global index of the episode this transition came from.
    pub traj_index: usize,
}

/// Clips every action coordinate into `[-1, 1]`.
pub fn clip_action(action: &[Real]) -> Vec<Real> {
    action.iter().map(|a| a.clamp(-1.0, 1.0)).collect()
}

/// Builds an environment from its config name. `tabular:<path>` names a JSON
/// MDP description, which continuous-control commands reject.
pub fn make_env(name: &str) -> Result<Box<dyn ContinuousEnv>> {
    match name {
        "linewalker" => Ok(Box::new(LineWalker::new())),
        "pointreach" => Ok(Box::new(PointReach::new())),
        other if other.starts_with("tabular:") => Err(Error::Config(format!(
            "env {other:?} is a tabular MDP; it supports theory verification, not continuous-control training"
        ))),
        other => Err(Error::Config(format!(
            "unknown env {other:?} (expected linewalker, pointreach, or tabular:<path>)"
        ))),
    }
}

/// Runs one full episode, choosing actions via `act`, and returns the stored
/// transitions plus the episode's true return.
pub fn rollout(
    env: &mut dyn ContinuousEnv,
    rng: &mut ChaCha20Rng,
    traj_index: usize,
    mut act: impl FnMut(&[Real], &mut ChaCha20Rng) -> Vec<Real>,
) -> Result<(Vec<Transition>, Real)> {
    let mut state = env.reset(rng);
    let mut transitions = Vec::with_capacity(env.horizon());
    let mut total = 0.0;
    loop {
        let action = act(&state, rng);
        let step = env.step(&action)?;
        total += step.reward;
        let done = step.done;
        transitions.push(Transition {
            state: state.clone(),
            action: step.action,
            next_state: step.next_state.clone(),
            reward: step.reward,
            done,
            traj_index,
        });
        state = step.next_state;
        if done {
            return Ok((transitions, total));
        }
    }
}
