//! Evaluation utilities: rank correlation between learned and true returns,
//! return normalization against random/expert reference levels, and
//! selection of early training checkpoints for the reward-quality protocol.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{make_env, rollout, ContinuousEnv};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::reward::RewardNet;
use crate::rng::{derived_rng, PROTOCOL_STREAM};
use crate::sac::{policy_eval, sample_noise};
use crate::tensor::Tensor;
use crate::Real;

/// Kendall rank correlation with tie correction (the tau-b variant),
/// computed in `O(n log n)` by sorting and inversion counting.
///
/// Returns an error when either sequence is constant (the coefficient is
/// undefined there, and silently returning zero would hide a degenerate
/// evaluation).
pub fn kendall_tau_b(x: &[Real], y: &[Real]) -> Result<Real> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "rank correlation needs equal lengths, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n < 2 {
        return Err(Error::Undefined(
            "rank correlation needs at least two points".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Undefined(
            "rank correlation inputs must be finite".into(),
        ));
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| {
        x[i].partial_cmp(&x[j])
            .unwrap()
            .then(y[i].partial_cmp(&y[j]).unwrap())
    });

    let pairs = |t: u64| t * (t - 1) / 2;
    let n0 = pairs(n as u64);

    // Tie counts among x and among joint (x, y) values, walking the sort.
    let mut n1 = 0u64;
    let mut n3 = 0u64;
    let mut run_x = 1u64;
    let mut run_xy = 1u64;
    for k in 1..n {
        if x[idx[k]] == x[idx[k - 1]] {
            run_x += 1;
            if y[idx[k]] == y[idx[k - 1]] {
                run_xy += 1;
            } else {
                n3 += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            n1 += pairs(run_x);
            n3 += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    n1 += pairs(run_x);
    n3 += pairs(run_xy);

    // Discordant pairs are inversions of y in x-order; merge sort counts
    // them. Ordering ties in y by y (done above) keeps y-ties out of the
    // swap count.
    let mut ys: Vec<Real> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = ys.clone();
    let swaps = merge_count(&mut ys, &mut buf);

    // y tie count from the now-sorted ys.
    let mut n2 = 0u64;
    let mut run_y = 1u64;
    for k in 1..n {
        if ys[k] == ys[k - 1] {
            run_y += 1;
        } else {
            n2 += pairs(run_y);
            run_y = 1;
        }
    }
    n2 += pairs(run_y);

    if n1 == n0 || n2 == n0 {
        return Err(Error::Undefined(
            "rank correlation undefined: a sequence is constant".into(),
        ));
    }
    let numer = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * swaps as i128;
    let denom = (((n0 - n1) as Real) * ((n0 - n2) as Real)).sqrt();
    Ok(numer as Real / denom)
}

/// Counts inversions while merge sorting `v` (uses `buf` as scratch).
fn merge_count(v: &mut [Real], buf: &mut [Real]) -> u64 {
    let n = v.len();
    if n <= 1 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = v.split_at_mut(mid);
    let (bl, br) = buf.split_at_mut(mid);
    let mut swaps = merge_count(left, bl) + merge_count(right, br);
    let (mut i, mut j) = (0, 0);
    for slot in buf.iter_mut().take(n) {
        if i < mid && (j >= n - mid || left[i] <= right[j]) {
            *slot = left[i];
            i += 1;
        } else {
            *slot = right[j];
            j += 1;
            swaps += (mid - i) as u64;
        }
    }
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// Reference return levels for reporting on a common scale: 0 is a random
/// policy, 1 is the data-generating policy's final performance.
#[derive(Clone, Copy, Debug, serde::Serialize, serde::Deserialize)]
pub struct ReturnScale {
    pub random: Real,
    pub expert: Real,
}

impl ReturnScale {
    pub fn new(random: Real, expert: Real) -> Result<Self> {
        if !(random.is_finite() && expert.is_finite()) {
            return Err(Error::Undefined("return references must be finite".into()));
        }
        if (expert - random).abs() < 1e-9 {
            return Err(Error::Undefined(format!(
                "return normalization degenerate: random {random} vs expert {expert}"
            )));
        }
        Ok(Self { random, expert })
    }

    pub fn normalize(&self, raw: Real) -> Real {
        (raw - self.random) / (self.expert - self.random)
    }

    pub fn denormalize(&self, normalized: Real) -> Real {
        self.random + normalized * (self.expert - self.random)
    }
}

/// Picks `count` checkpoint steps for the reward-quality protocol: restrict
/// to the earliest `early_fraction` of training (where policy quality still
/// varies), then take an evenly spaced subset including both endpoints.
pub fn select_protocol_checkpoints(
    steps: &[u64],
    total_steps: u64,
    early_fraction: f64,
    count: usize,
) -> Result<Vec<u64>> {
    if count < 2 {
        return Err(Error::Config("checkpoint selection needs count >= 2".into()));
    }
    if !steps.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config(
            "checkpoint steps must be strictly increasing".into(),
        ));
    }
    let cutoff = (total_steps as f64 * early_fraction).floor() as u64;
    let eligible: Vec<u64> = steps.iter().copied().filter(|&s| s <= cutoff).collect();
    if eligible.len() < count {
        return Err(Error::Config(format!(
            "need {count} checkpoints within the first {early_fraction} of {total_steps} steps, found {}",
            eligible.len()
        )));
    }
    let m = eligible.len();
    let picked: Vec<u64> = (0..count)
        .map(|i| {
            let pos = (i as f64 * (m - 1) as f64 / (count - 1) as f64).round() as usize;
            eligible[pos]
        })
        .collect();
    Ok(picked)
}

/// Mean return over `episodes` rollouts driven by a policy network, using
/// mode actions when `sampled` is false and reparameterized draws otherwise.
pub fn policy_mean_return(
    env: &mut dyn ContinuousEnv,
    actor: &Mlp<Real>,
    episodes: usize,
    sampled: bool,
    rng: &mut ChaCha20Rng,
) -> Result<Real> {
    if episodes == 0 {
        return Err(Error::Config("policy evaluation needs episodes > 0".into()));
    }
    let act_dim = env.act_dim();
    if actor.in_dim() != env.obs_dim() || actor.out_dim() != 2 * act_dim {
        return Err(Error::ShapeMismatch(format!(
            "policy net maps {} -> {}, env wants {} -> {}",
            actor.in_dim(),
            actor.out_dim(),
            env.obs_dim(),
            2 * act_dim
        )));
    }
    let mut total = 0.0;
    for ep in 0..episodes {
        let (_, ret) = rollout(env, rng, ep, |state, rng| {
            let states = Tensor::row(state);
            let noise = sampled.then(|| sample_noise(1, act_dim, rng));
            let (a, _) =
                policy_eval(actor, &states, act_dim, noise.as_ref()).expect("dims prechecked");
            a.data().to_vec()
        })?;
        total += ret;
    }
    Ok(total / episodes as Real)
}

/// Mean return of a uniform-random policy, the zero point of the
/// normalized return scale.
pub fn random_policy_mean_return(
    env: &mut dyn ContinuousEnv,
    episodes: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Real> {
    if episodes == 0 {
        return Err(Error::Config("policy evaluation needs episodes > 0".into()));
    }
    let act_dim = env.act_dim();
    let mut total = 0.0;
    for ep in 0..episodes {
        let (_, ret) = rollout(env, rng, ep, |_, rng| {
            (0..act_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect()
        })?;
        total += ret;
    }
    Ok(total / episodes as Real)
}

/// Stochastic rollouts of a policy: per episode, the visited (state, action)
/// rows and the true return.
pub fn sampled_policy_rollouts(
    env: &mut dyn ContinuousEnv,
    actor: &Mlp<Real>,
    episodes: usize,
    rng: &mut ChaCha20Rng,
) -> Result<(Vec<Tensor<Real>>, Vec<Real>)> {
    if episodes == 0 {
        return Err(Error::Config("rollout collection needs episodes > 0".into()));
    }
    let obs_dim = env.obs_dim();
    let act_dim = env.act_dim();
    let mut all_rows = Vec::with_capacity(episodes);
    let mut returns = Vec::with_capacity(episodes);
    for ep in 0..episodes {
        let (transitions, ret) = rollout(env, rng, ep, |state, rng| {
            let states = Tensor::row(state);
            let noise = sample_noise(1, act_dim, rng);
            let (a, _) =
                policy_eval(actor, &states, act_dim, Some(&noise)).expect("dims prechecked");
            a.data().to_vec()
        })?;
        let width = obs_dim + act_dim;
        let mut rows = Vec::with_capacity(transitions.len() * width);
        for t in &transitions {
            rows.extend_from_slice(&t.state);
            rows.extend_from_slice(&t.action);
        }
        all_rows.push(Tensor::new(transitions.len(), width, rows)?);
        returns.push(ret);
    }
    Ok((all_rows, returns))
}

/// Trajectory return under a learned reward: sum of per-row model outputs.
pub fn inferred_return(reward: &RewardNet, rows: &Tensor<Real>) -> Result<Real> {
    Ok(reward.eval_x(rows)?.data().iter().sum())
}

/// One checkpoint's entry in the reward-quality protocol.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RankCorrelationEntry {
    pub step: u64,
    pub tau: Real,
    pub n_rollouts: usize,
}

/// Rank correlation between learned and true returns across early training.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RankCorrelationReport {
    pub env: String,
    pub seed: u64,
    pub entries: Vec<RankCorrelationEntry>,
    pub mean_tau: Real,
}

/// Rank correlation for one checkpoint: roll out `n_rollouts` episodes with
/// the actor, then correlate true returns against returns inferred by the
/// paired reward net.
pub fn checkpoint_rank_correlation(
    env: &mut dyn ContinuousEnv,
    actor: &Mlp<Real>,
    reward: &RewardNet,
    n_rollouts: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Real> {
    if n_rollouts < 2 {
        return Err(Error::Config(
            "rank correlation needs at least two rollouts".into(),
        ));
    }
    let (rows, true_returns) = sampled_policy_rollouts(env, actor, n_rollouts, rng)?;
    let inferred: Vec<Real> = rows
        .iter()
        .map(|r| inferred_return(reward, r))
        .collect::<Result<_>>()?;
    kendall_tau_b(&inferred, &true_returns)
}

/// Runs the protocol over (step, actor, reward) checkpoint triples, one
/// rank-correlation entry per checkpoint. Each checkpoint draws a fresh
/// generator keyed by its step, so entries are reproducible in isolation
/// and independent of evaluation order.
pub fn generalizability_report(
    env_name: &str,
    seed: u64,
    checkpoints: &[(u64, Mlp<Real>, RewardNet)],
    n_rollouts: usize,
) -> Result<RankCorrelationReport> {
    if checkpoints.is_empty() {
        return Err(Error::Config("protocol needs at least one checkpoint".into()));
    }
    let mut env = make_env(env_name)?;
    let mut entries = Vec::with_capacity(checkpoints.len());
    for (step, actor, reward) in checkpoints {
        let mut rng = derived_rng(seed, PROTOCOL_STREAM, *step);
        let tau = checkpoint_rank_correlation(env.as_mut(), actor, reward, n_rollouts, &mut rng)?;
        entries.push(RankCorrelationEntry {
            step: *step,
            tau,
            n_rollouts,
        });
    }
    let mean_tau = entries.iter().map(|e| e.tau).sum::<Real>() / entries.len() as Real;
    Ok(RankCorrelationReport {
        env: env_name.to_string(),
        seed,
        entries,
        mean_tau,
    })
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for n = 1).
pub fn mean_std(xs: &[Real]) -> (Real, Real) {
    assert!(!xs.is_empty(), "mean_std of empty slice");
    let n = xs.len() as Real;
    let mean = xs.iter().sum::<Real>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<Real>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// O(n^2) reference: walk every pair, apply the textbook definition.
    fn tau_b_bruteforce(x: &[Real], y: &[Real]) -> Option<Real> {
        let n = x.len();
        let mut concordant = 0i64;
        let mut discordant = 0i64;
        let mut tie_x = 0i64;
        let mut tie_y = 0i64;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = x[i] - x[j];
                let dy = y[i] - y[j];
                if dx == 0.0 && dy == 0.0 {
                    tie_x += 1;
                    tie_y += 1;
                } else if dx == 0.0 {
                    tie_x += 1;
                } else if dy == 0.0 {
                    tie_y += 1;
                } else if dx * dy > 0.0 {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
        let n0 = (n * (n - 1) / 2) as i64;
        if tie_x == n0 || tie_y == n0 {
            return None;
        }
        let denom = (((n0 - tie_x) as Real) * ((n0 - tie_y) as Real)).sqrt();
        Some((concordant - discordant) as Real / denom)
    }

    #[test]
    fn perfect_agreement_and_reversal() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y_up = [10.0, 20.0, 30.0, 40.0];
        let y_down = [4.0, 3.0, 2.0, 1.0];
        assert_eq!(kendall_tau_b(&x, &y_up).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&x, &y_down).unwrap(), -1.0);
    }

    #[test]
    fn single_swap_gives_two_thirds() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 3.0, 2.0, 4.0];
        assert!((kendall_tau_b(&x, &y).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn tie_correction_matches_hand_computation() {
        // C = 5, D = 0, one x-tie: tau = 5 / sqrt(5 * 6).
        let x = [1.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0, 4.0];
        let expect = 5.0 / (30.0 as Real).sqrt();
        assert!((kendall_tau_b(&x, &y).unwrap() - expect).abs() < 1e-15);
    }

    #[test]
    fn constant_sequence_is_an_error() {
        let x = [1.0, 1.0, 1.0];
        let y = [1.0, 2.0, 3.0];
        assert!(kendall_tau_b(&x, &y).is_err());
        assert!(kendall_tau_b(&y, &x).is_err());
        assert!(kendall_tau_b(&y[..1], &x[..1]).is_err());
        assert!(kendall_tau_b(&[1.0, f64::NAN], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn matches_bruteforce_oracle(
            raw in prop::collection::vec((0i32..8, 0i32..8), 2..60),
        ) {
            let x: Vec<Real> = raw.iter().map(|p| p.0 as Real).collect();
            let y: Vec<Real> = raw.iter().map(|p| p.1 as Real).collect();
            match tau_b_bruteforce(&x, &y) {
                Some(expect) => {
                    let got = kendall_tau_b(&x, &y).unwrap();
                    prop_assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
                }
                None => prop_assert!(kendall_tau_b(&x, &y).is_err()),
            }
        }

        #[test]
        fn antisymmetric_under_negation(
            raw in prop::collection::vec((0i32..50, 0i32..50), 2..40),
        ) {
            let x: Vec<Real> = raw.iter().map(|p| p.0 as Real).collect();
            let y: Vec<Real> = raw.iter().map(|p| p.1 as Real).collect();
            let neg: Vec<Real> = y.iter().map(|v| -v).collect();
            if let Ok(t) = kendall_tau_b(&x, &y) {
                let nt = kendall_tau_b(&x, &neg).unwrap();
                prop_assert!((t + nt).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn return_scale_maps_references_to_zero_and_one() {
        let scale = ReturnScale::new(-40.0, 60.0).unwrap();
        assert_eq!(scale.normalize(-40.0), 0.0);
        assert_eq!(scale.normalize(60.0), 1.0);
        assert_eq!(scale.normalize(10.0), 0.5);
        assert!((scale.denormalize(0.5) - 10.0).abs() < 1e-12);
        assert!(ReturnScale::new(5.0, 5.0).is_err());
    }

    #[test]
    fn checkpoint_selection_is_even_and_early() {
        let steps: Vec<u64> = (1..=50).map(|k| k * 1000).collect();
        let picked = select_protocol_checkpoints(&steps, 50_000, 0.4, 10).unwrap();
        assert_eq!(
            picked,
            vec![1000, 3000, 5000, 7000, 9000, 12000, 14000, 16000, 18000, 20000]
        );
        assert_eq!(picked.len(), 10);
        assert!(picked.iter().all(|&s| s <= 20_000));
    }

    #[test]
    fn checkpoint_selection_errors_when_too_sparse() {
        let steps = vec![1000, 2000, 30_000, 40_000];
        assert!(select_protocol_checkpoints(&steps, 50_000, 0.4, 10).is_err());
        assert!(select_protocol_checkpoints(&[2000, 1000], 50_000, 0.4, 2).is_err());
    }

    #[test]
    fn rollout_returns_for_a_zero_policy_on_the_line_task() {
        use crate::envs::make_env;
        use crate::nn::{Activation, OutputActivation};
        use rand::SeedableRng;

        let mut env = make_env("linewalker").unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let mut actor = Mlp::new(
            &[2, 8, 2],
            Activation::Relu,
            OutputActivation::Identity,
            false,
            &mut rng,
        )
        .unwrap();
        for layer in actor.layers_mut() {
            layer.w.data_mut().fill(0.0);
            layer.b.data_mut().fill(0.0);
        }
        // Mode action tanh(0) = 0 never accelerates: return is exactly 0.
        let ret = policy_mean_return(env.as_mut(), &actor, 3, false, &mut rng).unwrap();
        assert_eq!(ret, 0.0);
        // Sampled actions pay the quadratic action cost.
        let sampled = policy_mean_return(env.as_mut(), &actor, 3, true, &mut rng).unwrap();
        assert!(sampled < 0.0);
        let random = random_policy_mean_return(env.as_mut(), 3, &mut rng).unwrap();
        assert!(random < 0.0);

        let bad = Mlp::new(
            &[3, 4, 2],
            Activation::Relu,
            OutputActivation::Identity,
            false,
            &mut rng,
        )
        .unwrap();
        assert!(policy_mean_return(env.as_mut(), &bad, 1, false, &mut rng).is_err());
        assert!(policy_mean_return(env.as_mut(), &actor, 0, false, &mut rng).is_err());
    }

    #[test]
    fn mean_std_matches_hand_values() {
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert!((m - 5.0).abs() < 1e-15);
        assert!((s - (32.0 as Real / 7.0).sqrt()).abs() < 1e-12);
        let (m1, s1) = mean_std(&[3.5]);
        assert_eq!((m1, s1), (3.5, 0.0));
    }

    fn random_actor(obs_dim: usize, act_dim: usize, seed: u64) -> Mlp<Real> {
        use crate::nn::{Activation, OutputActivation};
        use rand::SeedableRng;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Mlp::new(
            &[obs_dim, 8, 2 * act_dim],
            Activation::Relu,
            OutputActivation::Identity,
            false,
            &mut rng,
        )
        .unwrap()
    }

    #[test]
    fn monotone_score_transforms_pin_the_correlation_sign() {
        use rand::SeedableRng;
        let mut env = make_env("linewalker").unwrap();
        let actor = random_actor(2, 1, 3);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let (rows, true_returns) =
            sampled_policy_rollouts(env.as_mut(), &actor, 12, &mut rng).unwrap();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r.shape() == (100, 3)));

        // A positive affine transform of the true returns ranks identically;
        // a negated transform ranks in exact reverse.
        let affine: Vec<Real> = true_returns.iter().map(|&r| 2.0 * r + 3.0).collect();
        let negated: Vec<Real> = true_returns.iter().map(|&r| -r).collect();
        assert_eq!(kendall_tau_b(&affine, &true_returns).unwrap(), 1.0);
        assert_eq!(kendall_tau_b(&negated, &true_returns).unwrap(), -1.0);
    }

    #[test]
    fn inferred_return_sums_model_rewards() {
        use crate::nn::{Activation, OutputActivation};
        use rand::SeedableRng;
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let mut net = Mlp::new(
            &[3, 1],
            Activation::Relu,
            OutputActivation::Identity,
            false,
            &mut rng,
        )
        .unwrap();
        net.layers_mut()[0].w.data_mut().fill(0.0);
        net.layers_mut()[0].b.data_mut()[0] = 0.25;
        let constant = RewardNet::from_mlp(net, 2, 1).unwrap();
        let rows = Tensor::new(8, 3, vec![0.3; 24]).unwrap();
        let total = inferred_return(&constant, &rows).unwrap();
        assert!((total - 2.0).abs() < 1e-12);
    }

    #[test]
    fn protocol_report_is_ordered_and_reproducible() {
        use rand::SeedableRng;
        let mut net_rng = ChaCha20Rng::seed_from_u64(9);
        let checkpoints: Vec<(u64, Mlp<Real>, RewardNet)> = [100u64, 200, 300]
            .iter()
            .map(|&step| {
                (
                    step,
                    random_actor(2, 1, step),
                    RewardNet::new(2, 1, &[8], &mut net_rng).unwrap(),
                )
            })
            .collect();
        let report = generalizability_report("linewalker", 5, &checkpoints, 6).unwrap();
        assert_eq!(report.entries.len(), 3);
        assert!(report.entries.iter().all(|e| (-1.0..=1.0).contains(&e.tau)));
        assert!(report.entries.iter().all(|e| e.n_rollouts == 6));
        assert_eq!(
            report.mean_tau,
            report.entries.iter().map(|e| e.tau).sum::<Real>() / 3.0
        );

        // Entries depend only on (seed, step), not on evaluation order.
        let reversed: Vec<_> = checkpoints.iter().rev().cloned().collect();
        let back = generalizability_report("linewalker", 5, &reversed, 6).unwrap();
        for e in &report.entries {
            let other = back.entries.iter().find(|o| o.step == e.step).unwrap();
            assert_eq!(e.tau.to_bits(), other.tau.to_bits());
        }
        assert!(generalizability_report("linewalker", 5, &[], 6).is_err());
    }
}
