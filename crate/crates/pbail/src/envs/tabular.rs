//! Finite MDPs with known transition tables, used to verify the occupancy
//! and preference-bound machinery against exact linear algebra.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const STOCHASTIC_TOL: f64 = 1e-9;

/// Row-sum tolerance, widened for scalars coarser than f64.
fn stochastic_tol<S: Scalar>(n: usize) -> f64 {
    STOCHASTIC_TOL.max(S::epsilon().as_f64() * 8.0 * n as f64)
}

/// Tabular MDP: `n_states` x `n_actions` with row-stochastic transitions,
/// reward table, initial distribution, and discount in `(0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp<S> {
    n_states: usize,
    n_actions: usize,
    /// `p[s * A * N + a * N + s2] = Pr(s2 | s, a)`.
    transition: Vec<S>,
    /// `r[s * A + a]`.
    reward: Vec<S>,
    /// `mu[s]`.
    initial: Vec<S>,
    gamma: S,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TabularMdpFile {
    gamma: f64,
    initial: Vec<f64>,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
}

impl<S: Scalar> TabularMdp<S> {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<S>,
        reward: Vec<S>,
        initial: Vec<S>,
        gamma: S,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::InvalidDistribution(
                "mdp needs at least one state and action".into(),
            ));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::ShapeMismatch(format!(
                "transition table has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        if initial.len() != n_states {
            return Err(Error::ShapeMismatch(format!(
                "initial distribution has {} entries, expected {n_states}",
                initial.len()
            )));
        }
        let g = gamma.as_f64();
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::InvalidDistribution(format!(
                "gamma must lie in (0, 1), got {g}"
            )));
        }
        let mdp = Self {
            n_states,
            n_actions,
            transition,
            reward,
            initial,
            gamma,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                let mut sum = 0.0;
                for s2 in 0..n_states {
                    let p = mdp.p(s, a, s2).as_f64();
                    if p < 0.0 {
                        return Err(Error::InvalidDistribution(format!(
                            "negative transition probability at ({s}, {a}, {s2})"
                        )));
                    }
                    sum += p;
                }
                if (sum - 1.0).abs() > stochastic_tol::<S>(n_states) {
                    return Err(Error::InvalidDistribution(format!(
                        "transition row ({s}, {a}) sums to {sum}"
                    )));
                }
            }
        }
        let mu_sum: f64 = mdp.initial.iter().map(|x| x.as_f64()).sum();
        if mdp.initial.iter().any(|x| x.as_f64() < 0.0)
            || (mu_sum - 1.0).abs() > stochastic_tol::<S>(n_states)
        {
            return Err(Error::InvalidDistribution(format!(
                "initial distribution sums to {mu_sum} or has negative mass"
            )));
        }
        Ok(mdp)
    }

    /// Parses the JSON description `{gamma, initial, transition, reward}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: TabularMdpFile = serde_json::from_str(text)?;
        let n_states = file.initial.len();
        if file.transition.len() != n_states || file.reward.len() != n_states {
            return Err(Error::ShapeMismatch(
                "transition/reward outer length must match initial length".into(),
            ));
        }
        let n_actions = file.reward.first().map(|r| r.len()).unwrap_or(0);
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        let mut reward = Vec::with_capacity(n_states * n_actions);
        for s in 0..n_states {
            if file.transition[s].len() != n_actions || file.reward[s].len() != n_actions {
                return Err(Error::ShapeMismatch(format!(
                    "state {s} has inconsistent action count"
                )));
            }
            for a in 0..n_actions {
                if file.transition[s][a].len() != n_states {
                    return Err(Error::ShapeMismatch(format!(
                        "transition row ({s}, {a}) has wrong length"
                    )));
                }
                for &p in &file.transition[s][a] {
                    transition.push(S::c(p));
                }
                reward.push(S::c(file.reward[s][a]));
            }
        }
        Self::new(
            n_states,
            n_actions,
            transition,
            reward,
            file.initial.iter().map(|&x| S::c(x)).collect(),
            S::c(file.gamma),
        )
    }

    /// Random strictly positive MDP for fuzzing the theory checks.
    pub fn random(
        rng: &mut ChaCha20Rng,
        max_states: usize,
        max_actions: usize,
        gamma_range: (f64, f64),
    ) -> Self {
        let n_states = rng.gen_range(2..=max_states.max(2));
        let n_actions = rng.gen_range(2..=max_actions.max(2));
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            transition.extend(random_simplex_row::<S>(rng, n_states));
        }
        let reward = (0..n_states * n_actions)
            .map(|_| S::c(rng.gen_range(-1.0..1.0)))
            .collect();
        let initial = random_simplex_row::<S>(rng, n_states);
        let gamma = S::c(rng.gen_range(gamma_range.0..gamma_range.1));
        Self::new(n_states, n_actions, transition, reward, initial, gamma)
            .expect("random mdp is valid by construction")
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn gamma(&self) -> S {
        self.gamma
    }

    #[inline]
    pub fn p(&self, s: usize, a: usize, s2: usize) -> S {
        self.transition[s * self.n_actions * self.n_states + a * self.n_states + s2]
    }

    #[inline]
    pub fn r(&self, s: usize, a: usize) -> S {
        self.reward[s * self.n_actions + a]
    }

    #[inline]
    pub fn mu(&self, s: usize) -> S {
        self.initial[s]
    }

    /// Reward table in `[s][a]` layout.
    pub fn reward_table(&self) -> &[S] {
        &self.reward
    }
}

/// Row-stochastic policy over a tabular MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularPolicy<S> {
    n_states: usize,
    n_actions: usize,
    /// `probs[s * A + a]`.
    probs: Vec<S>,
}

impl<S: Scalar> TabularPolicy<S> {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<S>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::ShapeMismatch(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            let sum: f64 = row.iter().map(|x| x.as_f64()).sum();
            if row.iter().any(|x| x.as_f64() < 0.0)
                || (sum - 1.0).abs() > stochastic_tol::<S>(n_actions)
            {
                return Err(Error::InvalidDistribution(format!(
                    "policy row {s} sums to {sum} or has negative mass"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = S::one() / S::c(n_actions as f64);
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
        }
    }

    /// Random strictly positive policy.
    pub fn random(rng: &mut ChaCha20Rng, n_states: usize, n_actions: usize) -> Self {
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for _ in 0..n_states {
            probs.extend(random_simplex_row::<S>(rng, n_actions));
        }
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> S {
        self.probs[s * self.n_actions + a]
    }

    #[inline]
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    #[inline]
    pub fn n_actions(&self) -> usize {
        self.n_actions
    }
}

/// Strictly positive random point on the simplex (normalized exponentials).
fn random_simplex_row<S: Scalar>(rng: &mut ChaCha20Rng, n: usize) -> Vec<S> {
    let raw: Vec<f64> = (0..n).map(|_| -rng.gen_range(1e-12..1.0_f64).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| S::c(x / total)).collect()
}

/// Samples an index from unnormalized nonnegative weights.
fn sample_index<S: Scalar>(rng: &mut ChaCha20Rng, weights: impl Iterator<Item = S>) -> usize {
    let w: Vec<f64> = weights.map(|x| x.as_f64()).collect();
    let total: f64 = w.iter().sum();
    let mut u = rng.gen_range(0.0..1.0) * total;
    for (i, &x) in w.iter().enumerate() {
        u -= x;
        if u <= 0.0 {
            return i;
        }
    }
    w.len() - 1
}

/// Samples one `horizon`-step trajectory `(s, a, r)` under `policy`.
pub fn tabular_rollout<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &TabularPolicy<S>,
    horizon: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<(usize, usize, S)>> {
    if policy.n_states != mdp.n_states || policy.n_actions != mdp.n_actions {
        return Err(Error::ShapeMismatch(format!(
            "policy {}x{} vs mdp {}x{}",
            policy.n_states, policy.n_actions, mdp.n_states, mdp.n_actions
        )));
    }
    let mut out = Vec::with_capacity(horizon);
    let mut s = sample_index(rng, (0..mdp.n_states).map(|i| mdp.mu(i)));
    for _ in 0..horizon {
        let a = sample_index(rng, (0..mdp.n_actions).map(|a| policy.prob(s, a)));
        out.push((s, a, mdp.r(s, a)));
        s = sample_index(rng, (0..mdp.n_states).map(|s2| mdp.p(s, a, s2)));
    }
    Ok(out)
}
