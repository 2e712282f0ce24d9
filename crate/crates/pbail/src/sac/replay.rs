//! Fixed-capacity ring buffer of transitions with uniform batch sampling.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::envs::Transition;
use crate::error::{Error, Result};
use crate::tensor::Tensor;
use crate::Real;

/// One sampled minibatch, laid out as row-per-transition tensors.
#[derive(Clone, Debug)]
pub struct Batch {
    pub states: Tensor<Real>,
    pub actions: Tensor<Real>,
    /// Column of rewards as stored; trainers learning a reward overwrite it.
    pub rewards: Tensor<Real>,
    pub next_states: Tensor<Real>,
    /// 1 everywhere except true terminal states. Episode ends caused by the
    /// time limit keep 1 so the value bootstrap still applies.
    pub not_done: Tensor<Real>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    /// Builds a batch directly from transitions, all treated as
    /// non-terminal.
    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Data("cannot build an empty batch".into()));
        }
        let obs_dim = items[0].state.len();
        let act_dim = items[0].action.len();
        build_batch(items.iter().copied().map(|t| (t, false)), obs_dim, act_dim)
    }
}

fn build_batch<'a>(
    items: impl Iterator<Item = (&'a Transition, bool)>,
    obs_dim: usize,
    act_dim: usize,
) -> Result<Batch> {
    let mut states = Vec::new();
    let mut actions = Vec::new();
    let mut rewards = Vec::new();
    let mut next_states = Vec::new();
    let mut not_done = Vec::new();
    let mut n = 0;
    for (t, terminal) in items {
        if t.state.len() != obs_dim || t.action.len() != act_dim {
            return Err(Error::ShapeMismatch(
                "transition dims differ within batch".into(),
            ));
        }
        states.extend_from_slice(&t.state);
        actions.extend_from_slice(&t.action);
        rewards.push(t.reward);
        next_states.extend_from_slice(&t.next_state);
        not_done.push(if terminal { 0.0 } else { 1.0 });
        n += 1;
    }
    Ok(Batch {
        states: Tensor::new(n, obs_dim, states)?,
        actions: Tensor::new(n, act_dim, actions)?,
        rewards: Tensor::new(n, 1, rewards)?,
        next_states: Tensor::new(n, obs_dim, next_states)?,
        not_done: Tensor::new(n, 1, not_done)?,
    })
}

/// Uniform-replay ring buffer. Once full, new pushes evict the oldest entry.
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    items: Vec<(Transition, bool)>,
    next_slot: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            items: Vec::new(),
            next_slot: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stores a transition. `terminal` marks a true environment terminal; a
    /// horizon timeout is not one.
    pub fn push(&mut self, transition: Transition, terminal: bool) -> Result<()> {
        if transition.state.len() != self.obs_dim || transition.action.len() != self.act_dim {
            return Err(Error::ShapeMismatch(format!(
                "transition dims {}x{} do not match buffer {}x{}",
                transition.state.len(),
                transition.action.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        if self.items.len() < self.capacity {
            self.items.push((transition, terminal));
        } else {
            self.items[self.next_slot] = (transition, terminal);
            self.next_slot = (self.next_slot + 1) % self.capacity;
        }
        Ok(())
    }

    /// Samples `n` transitions uniformly with replacement.
    pub fn sample(&self, n: usize, rng: &mut ChaCha20Rng) -> Result<Batch> {
        if self.items.is_empty() {
            return Err(Error::Data("sampling from an empty replay buffer".into()));
        }
        build_batch(
            (0..n).map(|_| {
                let (t, terminal) = &self.items[rng.gen_range(0..self.items.len())];
                (t, *terminal)
            }),
            self.obs_dim,
            self.act_dim,
        )
    }

    /// Samples `n` transition references uniformly with replacement, for
    /// consumers that pair transitions rather than form SAC batches.
    pub fn sample_transitions(&self, n: usize, rng: &mut ChaCha20Rng) -> Result<Vec<&Transition>> {
        if self.items.is_empty() {
            return Err(Error::Data("sampling from an empty replay buffer".into()));
        }
        Ok((0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())].0)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn transition(tag: Real) -> Transition {
        Transition {
            state: vec![tag, tag + 0.5],
            action: vec![-tag],
            next_state: vec![tag + 1.0, tag + 1.5],
            reward: tag * 10.0,
            done: false,
            traj_index: 0,
        }
    }

    #[test]
    fn ring_evicts_oldest_when_full() {
        let mut buf = ReplayBuffer::new(4, 2, 1);
        for k in 0..6 {
            buf.push(transition(k as Real), false).unwrap();
        }
        assert_eq!(buf.len(), 4);
        let rewards: Vec<Real> = buf.items.iter().map(|(t, _)| t.reward).collect();
        // Slots 0 and 1 were overwritten by pushes 4 and 5.
        assert_eq!(rewards, vec![40.0, 50.0, 20.0, 30.0]);
    }

    #[test]
    fn sample_has_expected_shapes_and_terminal_mask() {
        let mut buf = ReplayBuffer::new(8, 2, 1);
        buf.push(transition(1.0), false).unwrap();
        buf.push(transition(2.0), true).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let batch = buf.sample(32, &mut rng).unwrap();
        assert_eq!(batch.states.shape(), (32, 2));
        assert_eq!(batch.actions.shape(), (32, 1));
        assert_eq!(batch.rewards.shape(), (32, 1));
        assert_eq!(batch.next_states.shape(), (32, 2));
        assert_eq!(batch.not_done.shape(), (32, 1));
        for r in 0..32 {
            let nd = batch.not_done.get(r, 0);
            let reward = batch.rewards.get(r, 0);
            if reward == 20.0 {
                assert_eq!(nd, 0.0);
            } else {
                assert_eq!(nd, 1.0);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed_and_errors_when_empty() {
        let mut buf = ReplayBuffer::new(16, 2, 1);
        assert!(buf.sample(4, &mut ChaCha20Rng::seed_from_u64(1)).is_err());
        assert!(buf
            .sample_transitions(4, &mut ChaCha20Rng::seed_from_u64(1))
            .is_err());
        for k in 0..10 {
            buf.push(transition(k as Real), false).unwrap();
        }
        let a = buf.sample(8, &mut ChaCha20Rng::seed_from_u64(7)).unwrap();
        let b = buf.sample(8, &mut ChaCha20Rng::seed_from_u64(7)).unwrap();
        assert_eq!(a.rewards.data(), b.rewards.data());
    }

    #[test]
    fn push_rejects_mismatched_dims() {
        let mut buf = ReplayBuffer::new(4, 3, 1);
        assert!(buf.push(transition(0.0), false).is_err());
    }

    #[test]
    fn batch_from_transitions_preserves_order() {
        let items = [transition(1.0), transition(2.0)];
        let refs: Vec<&Transition> = items.iter().collect();
        let batch = Batch::from_transitions(&refs).unwrap();
        assert_eq!(batch.len(), 2);
        assert_eq!(batch.rewards.data(), &[10.0, 20.0]);
        assert_eq!(batch.not_done.data(), &[1.0, 1.0]);
        assert!(Batch::from_transitions(&[]).is_err());
    }
}
