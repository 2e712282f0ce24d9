//! Exact occupancy measures, values, and the pairwise preference bound on
//! tabular MDPs.
//!
//! The discounted occupancy of policy `pi` is
//! `rho(s, a) = sum_t gamma^(t-1) Pr(s_t = s, a_t = a)`, computed here by a
//! direct linear solve. Three identities anchor the rest of the crate:
//! total occupancy mass is `1 / (1 - gamma)`; the expected discounted return
//! equals the occupancy-weighted reward; and row-normalizing an occupancy
//! recovers its policy wherever the state is visited.
//!
//! [`jensen_lower_bound`] evaluates the expected pairwise log-preference
//! between two policies' *normalized* occupancy distributions
//! `(1 - gamma) rho`. By Jensen's inequality (log-sigmoid is concave) it
//! never exceeds [`policy_pref_loglik_normalized`], the log-likelihood under
//! matching value normalization, with equality for constant rewards.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::envs::tabular::{TabularMdp, TabularPolicy};
use crate::error::{Error, Result};
use crate::scalar::{log_sigmoid, Scalar};

/// Solves the dense system `a x = b` in place by LU with partial pivoting.
/// `a` is row-major `n x n`.
fn lu_solve<S: Scalar>(mut a: Vec<S>, mut b: Vec<S>) -> Result<Vec<S>> {
    let n = b.len();
    assert_eq!(a.len(), n * n, "lu_solve needs a square system");
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let mag = a[row * n + col].abs();
            if mag > best {
                best = mag;
                pivot = row;
            }
        }
        if best.as_f64() < 1e-300 {
            return Err(Error::InvalidDistribution(
                "singular system in occupancy solve".into(),
            ));
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            if factor == S::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[row * n + k] -= factor * v;
            }
            let bc = b[col];
            b[row] -= factor * bc;
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in (col + 1)..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    Ok(b)
}

fn check_policy<S: Scalar>(mdp: &TabularMdp<S>, policy: &TabularPolicy<S>) -> Result<()> {
    if policy.n_states() != mdp.n_states() || policy.n_actions() != mdp.n_actions() {
        return Err(Error::ShapeMismatch(format!(
            "policy {}x{} vs mdp {}x{}",
            policy.n_states(),
            policy.n_actions(),
            mdp.n_states(),
            mdp.n_actions()
        )));
    }
    Ok(())
}

/// Discounted state visitation `d(s) = sum_t gamma^(t-1) Pr(s_t = s)`,
/// solving `(I - gamma P_pi^T) d = mu`.
fn state_visitation<S: Scalar>(mdp: &TabularMdp<S>, policy: &TabularPolicy<S>) -> Result<Vec<S>> {
    let n = mdp.n_states();
    let gamma = mdp.gamma();
    let mut a = vec![S::zero(); n * n];
    for s2 in 0..n {
        for s in 0..n {
            // P_pi(s -> s2), transposed into row s2.
            let mut p = S::zero();
            for act in 0..mdp.n_actions() {
                p += policy.prob(s, act) * mdp.p(s, act, s2);
            }
            let mut entry = -gamma * p;
            if s == s2 {
                entry += S::one();
            }
            a[s2 * n + s] = entry;
        }
    }
    let mu = (0..n).map(|s| mdp.mu(s)).collect();
    lu_solve(a, mu)
}

/// Exact discounted occupancy `rho(s, a)` in `[s][a]` layout.
pub fn exact_occupancy<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &TabularPolicy<S>,
) -> Result<Vec<S>> {
    check_policy(mdp, policy)?;
    let d = state_visitation(mdp, policy)?;
    let mut rho = vec![S::zero(); mdp.n_states() * mdp.n_actions()];
    for s in 0..mdp.n_states() {
        for a in 0..mdp.n_actions() {
            rho[s * mdp.n_actions() + a] = d[s] * policy.prob(s, a);
        }
    }
    Ok(rho)
}

/// Expected discounted return of `policy` under a supplied reward table,
/// via the value solve `(I - gamma P_pi) V = r_pi`, `v = mu . V`.
///
/// This route never touches the occupancy solve, so agreement with
/// `sum(rho * r)` is a genuine cross-check.
pub fn exact_value<S: Scalar>(
    mdp: &TabularMdp<S>,
    policy: &TabularPolicy<S>,
    reward: &[S],
) -> Result<S> {
    check_policy(mdp, policy)?;
    let n = mdp.n_states();
    if reward.len() != n * mdp.n_actions() {
        return Err(Error::ShapeMismatch(format!(
            "reward table has {} entries, expected {}",
            reward.len(),
            n * mdp.n_actions()
        )));
    }
    let gamma = mdp.gamma();
    let mut a = vec![S::zero(); n * n];
    let mut r_pi = vec![S::zero(); n];
    for s in 0..n {
        for s2 in 0..n {
            let mut p = S::zero();
            for act in 0..mdp.n_actions() {
                p += policy.prob(s, act) * mdp.p(s, act, s2);
            }
            let mut entry = -gamma * p;
            if s == s2 {
                entry += S::one();
            }
            a[s * n + s2] = entry;
        }
        for act in 0..mdp.n_actions() {
            r_pi[s] += policy.prob(s, act) * reward[s * mdp.n_actions() + act];
        }
    }
    let v = lu_solve(a, r_pi)?;
    let mut out = S::zero();
    for s in 0..n {
        out += mdp.mu(s) * v[s];
    }
    Ok(out)
}

/// Occupancy-weighted expected reward `sum_{s,a} rho(s,a) r(s,a)`.
pub fn value_from_occupancy<S: Scalar>(rho: &[S], reward: &[S]) -> Result<S> {
    if rho.len() != reward.len() {
        return Err(Error::ShapeMismatch(format!(
            "occupancy has {} entries, reward {}",
            rho.len(),
            reward.len()
        )));
    }
    let mut acc = S::zero();
    for (&o, &r) in rho.iter().zip(reward) {
        acc += o * r;
    }
    Ok(acc)
}

/// Recovers a policy from an occupancy by row normalization. States with no
/// occupancy mass get a uniform row; everywhere visited, this inverts
/// [`exact_occupancy`].
pub fn occupancy_to_policy<S: Scalar>(
    n_states: usize,
    n_actions: usize,
    rho: &[S],
) -> Result<TabularPolicy<S>> {
    if rho.len() != n_states * n_actions {
        return Err(Error::ShapeMismatch(format!(
            "occupancy has {} entries, expected {}",
            rho.len(),
            n_states * n_actions
        )));
    }
    if rho.iter().any(|x| x.as_f64() < 0.0) {
        return Err(Error::InvalidDistribution(
            "occupancy has negative mass".into(),
        ));
    }
    let uniform = S::one() / S::c(n_actions as f64);
    let mut probs = vec![S::zero(); n_states * n_actions];
    for s in 0..n_states {
        let row = &rho[s * n_actions..(s + 1) * n_actions];
        let mut mass = S::zero();
        for &x in row {
            mass += x;
        }
        if mass.as_f64() <= 0.0 {
            for a in 0..n_actions {
                probs[s * n_actions + a] = uniform;
            }
        } else {
            for a in 0..n_actions {
                probs[s * n_actions + a] = row[a] / mass;
            }
        }
    }
    TabularPolicy::new(n_states, n_actions, probs)
}

/// Log-likelihood `log sigmoid(v_b - v_pi)` that `b` is preferred over `pi`,
/// using exact (unnormalized) values under the supplied reward table.
pub fn policy_pref_loglik<S: Scalar>(
    mdp: &TabularMdp<S>,
    reward: &[S],
    b: &TabularPolicy<S>,
    pi: &TabularPolicy<S>,
) -> Result<S> {
    let vb = exact_value(mdp, b, reward)?;
    let vp = exact_value(mdp, pi, reward)?;
    Ok(log_sigmoid(vb - vp))
}

/// Same likelihood with values rescaled by `(1 - gamma)`, i.e. expectations
/// under the normalized occupancy distributions. This is the form the
/// pairwise bound is tight against.
pub fn policy_pref_loglik_normalized<S: Scalar>(
    mdp: &TabularMdp<S>,
    reward: &[S],
    b: &TabularPolicy<S>,
    pi: &TabularPolicy<S>,
) -> Result<S> {
    let vb = exact_value(mdp, b, reward)?;
    let vp = exact_value(mdp, pi, reward)?;
    let scale = S::one() - mdp.gamma();
    Ok(log_sigmoid(scale * (vb - vp)))
}

/// Expected pairwise log-preference
/// `E_{x ~ rho_hat_b, x' ~ rho_hat_pi} [log sigmoid(r(x) - r(x'))]`
/// between normalized occupancy distributions `rho_hat = (1 - gamma) rho`.
///
/// Moving the expectation inside the concave log-sigmoid can only increase
/// the value, so this is a lower bound on
/// [`policy_pref_loglik_normalized`].
pub fn jensen_lower_bound<S: Scalar>(
    mdp: &TabularMdp<S>,
    reward: &[S],
    b: &TabularPolicy<S>,
    pi: &TabularPolicy<S>,
) -> Result<S> {
    if reward.len() != mdp.n_states() * mdp.n_actions() {
        return Err(Error::ShapeMismatch(format!(
            "reward table has {} entries, expected {}",
            reward.len(),
            mdp.n_states() * mdp.n_actions()
        )));
    }
    let scale = S::one() - mdp.gamma();
    let rho_b = exact_occupancy(mdp, b)?;
    let rho_pi = exact_occupancy(mdp, pi)?;
    let mut acc = S::zero();
    for (x, &wb) in rho_b.iter().enumerate() {
        let wb = wb * scale;
        if wb.as_f64() == 0.0 {
            continue;
        }
        for (x2, &wp) in rho_pi.iter().enumerate() {
            let wp = wp * scale;
            if wp.as_f64() == 0.0 {
                continue;
            }
            acc += wb * wp * log_sigmoid(reward[x] - reward[x2]);
        }
    }
    Ok(acc)
}

/// Outcome of one theory check on one random instance.
#[derive(Clone, Debug, Serialize)]
pub struct TheoryRecord {
    pub check: String,
    pub instance: u64,
    pub seed: u64,
    pub lhs: f64,
    pub rhs: f64,
    /// Signed slack; nonnegative means the check holds.
    pub gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Tolerances for the randomized suite.
const EQ_TOL: f64 = 1e-9;
const BOUND_TOL: f64 = 1e-12;

/// Runs the randomized theory suite: `instances` random MDPs with at most
/// `max_states`/`max_actions`, discounts in `[0.5, 0.99]`, two random
/// strictly positive policies each. Five checks per instance:
///
/// 1. total occupancy mass equals `1 / (1 - gamma)`;
/// 2. occupancy-weighted reward equals the value-solve return;
/// 3. row-normalizing the occupancy recovers the policy;
/// 4. the pairwise bound never exceeds the normalized log-likelihood;
/// 5. the bound is tight for constant rewards.
///
/// `inject_fault` deliberately corrupts every left-hand side so each check
/// fails (equality checks get a `1e-3` skew, the bound check is lifted past
/// its right-hand side); the CLI self-test uses it to prove the suite can
/// detect breakage.
pub fn run_theory_suite(
    instances: u64,
    master_seed: u64,
    max_states: usize,
    max_actions: usize,
    inject_fault: bool,
) -> Vec<TheoryRecord> {
    let mut master = ChaCha20Rng::seed_from_u64(master_seed);
    let mut records = Vec::with_capacity(instances as usize * 5);
    let fault = if inject_fault { 1e-3 } else { 0.0 };
    for instance in 0..instances {
        let seed: u64 = master.gen();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mdp = TabularMdp::<f64>::random(&mut rng, max_states, max_actions, (0.5, 0.99));
        let b = TabularPolicy::random(&mut rng, mdp.n_states(), mdp.n_actions());
        let pi = TabularPolicy::random(&mut rng, mdp.n_states(), mdp.n_actions());
        let rho_pi = exact_occupancy(&mdp, &pi).expect("valid instance");

        let mass: f64 = rho_pi.iter().sum::<f64>() + fault;
        let mass_target = 1.0 / (1.0 - mdp.gamma());
        records.push(TheoryRecord {
            check: "occupancy_mass".into(),
            instance,
            seed,
            lhs: mass,
            rhs: mass_target,
            gap: EQ_TOL - (mass - mass_target).abs(),
            tolerance: EQ_TOL,
            pass: (mass - mass_target).abs() <= EQ_TOL,
        });

        let v_occ = value_from_occupancy(&rho_pi, mdp.reward_table()).unwrap() + fault;
        let v_solve = exact_value(&mdp, &pi, mdp.reward_table()).unwrap();
        records.push(TheoryRecord {
            check: "value_dual".into(),
            instance,
            seed,
            lhs: v_occ,
            rhs: v_solve,
            gap: EQ_TOL - (v_occ - v_solve).abs(),
            tolerance: EQ_TOL,
            pass: (v_occ - v_solve).abs() <= EQ_TOL,
        });

        let recovered = occupancy_to_policy(mdp.n_states(), mdp.n_actions(), &rho_pi).unwrap();
        let mut max_diff: f64 = 0.0;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                max_diff = max_diff.max((recovered.prob(s, a) - pi.prob(s, a)).abs());
            }
        }
        max_diff += fault;
        records.push(TheoryRecord {
            check: "policy_round_trip".into(),
            instance,
            seed,
            lhs: max_diff,
            rhs: 0.0,
            gap: EQ_TOL - max_diff,
            tolerance: EQ_TOL,
            pass: max_diff <= EQ_TOL,
        });

        let loglik = policy_pref_loglik_normalized(&mdp, mdp.reward_table(), &b, &pi).unwrap();
        // The bound usually has real slack, so a small additive skew would
        // go unnoticed; the injected fault instead lifts the bound just
        // past the quantity it must stay below.
        let bound = if inject_fault {
            loglik + fault
        } else {
            jensen_lower_bound(&mdp, mdp.reward_table(), &b, &pi).unwrap()
        };
        records.push(TheoryRecord {
            check: "jensen_bound".into(),
            instance,
            seed,
            lhs: bound,
            rhs: loglik,
            gap: loglik - bound,
            tolerance: BOUND_TOL,
            pass: loglik - bound >= -BOUND_TOL,
        });

        let c = rng.gen_range(-1.0..1.0);
        let const_reward = vec![c; mdp.n_states() * mdp.n_actions()];
        let bound_c = jensen_lower_bound(&mdp, &const_reward, &b, &pi).unwrap() + fault;
        let loglik_c = policy_pref_loglik_normalized(&mdp, &const_reward, &b, &pi).unwrap();
        records.push(TheoryRecord {
            check: "jensen_tight_const".into(),
            instance,
            seed,
            lhs: bound_c,
            rhs: loglik_c,
            gap: EQ_TOL - (bound_c - loglik_c).abs(),
            tolerance: EQ_TOL,
            pass: (bound_c - loglik_c).abs() <= EQ_TOL,
        });
    }
    records
}
