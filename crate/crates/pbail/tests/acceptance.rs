//! Verification gate: eight checks covering exact tabular theory, gradient
//! correctness against finite differences, closed-form loss identities,
//! preference labeling counts, reward-learning fidelity, the data-matching
//! ablation, the generalizability protocol, and bitwise rerun determinism.
//!
//! Each check prints one `criterion N: [PASS|FAIL] ...` line directly to
//! stderr (bypassing test capture) so the gate's verdict is visible in any
//! test run. Checks share disk fixtures and serialize on a mutex because
//! budgets are tuned for a single core.

use std::collections::HashMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use pbail::cli::{gen_data_cached, label, run_cell, CellSpec, DatasetManifest, DATA_FILE};
use pbail::data::files::load_trajectories;
use pbail::data::{
    build_clip_batch, clip_rows, clip_true_return, label_preferences, sample_clips, verify_labels,
    BehaviorConfig, DataVersion, OfflineDataset, Pairing, PreferenceSample,
};
use pbail::envs::make_env;
use pbail::eval::{inferred_return, kendall_tau_b, sampled_policy_rollouts, RankCorrelationReport};
use pbail::nn::checkpoint::load_nets;
use pbail::nn::gradcheck::{central_diff, max_rel_err};
use pbail::nn::{Mlp, Tape};
use pbail::occupancy::run_theory_suite;
use pbail::reward::{
    init_consolidation_loss, preference_loss, reliability_weighted_loss,
    reliability_weighted_prob, virtual_pref_loss, PairedClipBatch, ReliabilityNet, RewardNet,
};
use pbail::rng::{derived_rng, DATA_STREAM, PROTOCOL_STREAM};
use pbail::sac::{bc_nll_taped, policy_eval, policy_taped, sample_noise, SacAgent, SacConfig};
use pbail::tensor::Tensor;
use pbail::trainers::{pretrain_reward, preference_accuracy, Algo, RewardLossLog, TrainerConfig};
use pbail::Real;

/// One criterion at a time; budgets assume exclusive use of the core.
static GATE: Mutex<()> = Mutex::new(());

fn gate() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes the verdict line straight to stderr so it survives test capture.
fn report(criterion: u32, pass: bool, started: Instant, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let secs = started.elapsed().as_secs_f64();
    writeln!(
        std::io::stderr().lock(),
        "criterion {criterion}: [{verdict}] ({secs:.1}s) {detail}"
    )
    .unwrap();
}

const CLIP_LEN: usize = 20;
const LINE_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const POINT_SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

/// Budget for the data-generating SAC runs behind the offline corpora. The
/// snapshot cadence is fine (100) so threshold crossings are caught close to
/// where they happen.
fn fixture_behavior() -> BehaviorConfig {
    BehaviorConfig {
        total_steps: 6000,
        warmup_steps: 500,
        eval_interval: 100,
        eval_episodes: 10,
        verify_episodes: 20,
        batch_size: 128,
        hidden: vec![32, 32],
        replay_capacity: 100_000,
        lr: 3e-4,
    }
}

/// Trainer budget shared by the full-run criteria.
fn fixture_trainer(algo: Algo, env: &str) -> TrainerConfig {
    let mut cfg = TrainerConfig::desk_default(algo, env, 0);
    cfg.total_steps = 15_000;
    cfg.k_init = 2_000;
    cfg.warmup_steps = 1_000;
    cfg.eval_interval = 1_000;
    cfg.eval_episodes = 10;
    cfg.checkpoint_interval = 3_000;
    cfg
}

struct SeedFixture {
    seed: u64,
    data_dir: PathBuf,
    labels_dir: PathBuf,
    manifest: DatasetManifest,
}

impl SeedFixture {
    fn data_path(&self) -> PathBuf {
        self.data_dir.join(DATA_FILE)
    }

    fn data_norm(&self) -> Real {
        (self.manifest.data_mean_return - self.manifest.random_return)
            / (self.manifest.expert_return - self.manifest.random_return)
    }
}

/// Generates (or reuses from a previous run) the offline corpus and labels
/// for one environment seed. Datasets are cached by manifest + checksum.
fn build_fixture(env: &str, seed: u64, root: &Path) -> SeedFixture {
    let data_dir = root.join(format!("{env}_novice_seed{seed}"));
    let (manifest, _cached) = gen_data_cached(
        env,
        DataVersion::Novice,
        seed,
        50,
        &fixture_behavior(),
        &data_dir,
    )
    .expect("fixture dataset");
    let labels_dir = data_dir.join("labels");
    label(&data_dir.join(DATA_FILE), CLIP_LEN, Pairing::All, seed, &labels_dir)
        .expect("fixture labels");
    SeedFixture {
        seed,
        data_dir,
        labels_dir,
        manifest,
    }
}

fn fixture_root() -> &'static PathBuf {
    static ROOT: OnceLock<PathBuf> = OnceLock::new();
    ROOT.get_or_init(|| {
        let root = std::env::temp_dir().join("pbail-acceptance-fixtures");
        fs::create_dir_all(&root).expect("fixture root");
        root
    })
}

fn line_fixtures() -> &'static [SeedFixture] {
    static F: OnceLock<Vec<SeedFixture>> = OnceLock::new();
    F.get_or_init(|| {
        LINE_SEEDS
            .iter()
            .map(|&s| build_fixture("linewalker", s, fixture_root()))
            .collect()
    })
}

fn point_fixtures() -> &'static [SeedFixture] {
    static F: OnceLock<Vec<SeedFixture>> = OnceLock::new();
    F.get_or_init(|| {
        POINT_SEEDS
            .iter()
            .map(|&s| build_fixture("pointreach", s, fixture_root()))
            .collect()
    })
}

/// Trainer config wired to one fixture's files.
fn fixture_config(algo: Algo, env: &str, fx: &SeedFixture) -> TrainerConfig {
    let mut cfg = fixture_trainer(algo, env);
    cfg.seed = fx.seed;
    cfg.data_path = fx.data_path().to_string_lossy().into_owned();
    cfg.clips_path = fx.labels_dir.join("clips.json").to_string_lossy().into_owned();
    cfg.prefs_path = fx.labels_dir.join("prefs.jsonl").to_string_lossy().into_owned();
    cfg.random_return = fx.manifest.random_return;
    cfg.expert_return = fx.manifest.expert_return;
    cfg
}

/// Cell description matching the fixtures, so cached datasets are reused.
fn fixture_cell(algo: Algo, env: &str, protocol_checkpoints: usize) -> CellSpec {
    CellSpec {
        env: env.to_string(),
        version: DataVersion::Novice,
        n_trajectories: 50,
        clip_len: CLIP_LEN,
        pairing: Pairing::All,
        behavior: fixture_behavior(),
        trainer: fixture_trainer(algo, env),
        rollouts: 20,
        protocol_checkpoints,
        early_fraction: 0.4,
    }
}

// --- criterion 1: tabular theory suite -----------------------------------

#[test]
fn criterion_1_tabular_theory() {
    let _lock = gate();
    let started = Instant::now();

    let records = run_theory_suite(1000, 0, 20, 4, false);
    assert_eq!(records.len(), 5000, "five checks per instance");
    let failures: Vec<_> = records.iter().filter(|r| !r.pass).collect();
    let mut by_check: HashMap<&str, usize> = HashMap::new();
    for r in &records {
        *by_check.entry(r.check.as_str()).or_default() += 1;
    }
    let names_ok = ["occupancy_mass", "value_dual", "policy_round_trip", "jensen_bound", "jensen_tight_const"]
        .iter()
        .all(|n| by_check.get(n) == Some(&1000));
    let elapsed = started.elapsed();
    let pass = failures.is_empty() && names_ok && elapsed < Duration::from_secs(120);
    report(
        1,
        pass,
        started,
        &format!(
            "1000 tabular instances, {} checks, {} failures",
            records.len(),
            failures.len()
        ),
    );
    assert!(failures.is_empty(), "{} theory checks failed", failures.len());
    assert!(names_ok, "unexpected check multiset: {by_check:?}");
    assert!(elapsed < Duration::from_secs(120), "theory suite took {elapsed:?}");
}

// --- criterion 2: gradients vs central differences ------------------------

const GRAD_INSTANCES: u64 = 100;
const GRAD_TOL: f64 = 1e-6;
const GRAD_H: f64 = 1e-5;

fn random_x(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> Tensor<Real> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn random_clip_batch(pairs: usize, clip_len: usize, cols: usize, rng: &mut ChaCha20Rng) -> PairedClipBatch {
    let bounds: Vec<usize> = (0..=pairs).map(|k| k * clip_len).collect();
    PairedClipBatch {
        x1: random_x(pairs * clip_len, cols, rng),
        bounds1: bounds.clone(),
        x2: random_x(pairs * clip_len, cols, rng),
        bounds2: bounds,
        labels: Tensor::new(
            pairs,
            1,
            (0..pairs).map(|_| [0.0, 0.5, 1.0][rng.gen_range(0..3)]).collect(),
        )
        .unwrap(),
    }
}

fn flatten_reward_grads(
    tape: &mut Tape<Real>,
    taped: &pbail::nn::TapedMlp,
    net: &RewardNet,
    loss: pbail::nn::tape::Var,
) -> Vec<Real> {
    let mut grads = tape.backward(loss).unwrap();
    let mut flat = Vec::new();
    for g in taped.grads(&mut grads, net.mlp()) {
        flat.extend_from_slice(g.data());
    }
    flat
}

/// Max relative error between analytic and numeric gradients for one of the
/// reward-side losses. `kind` picks the loss.
fn reward_loss_gradcheck(kind: u32, instance: u64) -> Real {
    let mut rng = ChaCha20Rng::seed_from_u64(instance * 16 + kind as u64);
    let net = RewardNet::new(2, 1, &[6, 6], &mut rng).unwrap();
    let rel = ReliabilityNet::new(&[6], &mut rng).unwrap();
    let batch = random_clip_batch(3, 4, 3, &mut rng);
    let xd = random_x(5, 3, &mut rng);
    let xr = random_x(5, 3, &mut rng);
    let index = Tensor::new(5, 1, (0..5).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();

    let n_reward = net.mlp().flat_params().len();
    let mut at = net.mlp().flat_params();
    at.extend(rel.mlp().flat_params());

    let rebuild = |flat: &[Real]| {
        let mut m1 = net.mlp().clone();
        m1.set_flat_params(&flat[..n_reward]).unwrap();
        let mut m2 = rel.mlp().clone();
        m2.set_flat_params(&flat[n_reward..]).unwrap();
        (
            RewardNet::from_mlp(m1, 2, 1).unwrap(),
            ReliabilityNet::from_mlp(m2).unwrap(),
        )
    };
    let loss_of = |flat: &[Real]| {
        let (n2, r2) = rebuild(flat);
        let mut tape = Tape::new();
        let tr = n2.register(&mut tape);
        let v = match kind {
            0 => preference_loss(&mut tape, &tr, &batch).unwrap(),
            1 => virtual_pref_loss(&mut tape, &tr, &xd, &xr).unwrap(),
            2 => {
                let ta = r2.register(&mut tape);
                reliability_weighted_loss(&mut tape, &tr, &ta, &xd, &xr, &index, false)
                    .unwrap()
                    .loss
            }
            _ => {
                let ta = r2.register(&mut tape);
                init_consolidation_loss(&mut tape, &tr, &ta, &xd, &xr, &index, false)
                    .unwrap()
                    .loss
            }
        };
        tape.value(v).item().unwrap()
    };
    let numeric = central_diff(&loss_of, &at, GRAD_H);

    let mut tape = Tape::new();
    let tr = net.register(&mut tape);
    let mut analytic = match kind {
        0 => {
            let v = preference_loss(&mut tape, &tr, &batch).unwrap();
            flatten_reward_grads(&mut tape, &tr, &net, v)
        }
        1 => {
            let v = virtual_pref_loss(&mut tape, &tr, &xd, &xr).unwrap();
            flatten_reward_grads(&mut tape, &tr, &net, v)
        }
        k => {
            let ta = rel.register(&mut tape);
            let out = if k == 2 {
                reliability_weighted_loss(&mut tape, &tr, &ta, &xd, &xr, &index, false).unwrap()
            } else {
                init_consolidation_loss(&mut tape, &tr, &ta, &xd, &xr, &index, false).unwrap()
            };
            let mut grads = tape.backward(out.loss).unwrap();
            let mut flat = Vec::new();
            for g in tr.grads(&mut grads, net.mlp()) {
                flat.extend_from_slice(g.data());
            }
            for g in ta.grads(&mut grads, rel.mlp()) {
                flat.extend_from_slice(g.data());
            }
            flat
        }
    };
    analytic.resize(at.len(), 0.0);
    max_rel_err(&analytic, &numeric)
}

fn tiny_sac(rng: &mut ChaCha20Rng) -> SacAgent {
    let mut cfg = SacConfig::new(2, 1);
    cfg.hidden = vec![6];
    SacAgent::new(cfg, rng).unwrap()
}

/// Critic objective: summed mean squared Bellman error of both critics
/// against fixed targets, checked over both critics' parameters jointly.
fn critic_gradcheck(instance: u64) -> Real {
    let mut rng = ChaCha20Rng::seed_from_u64(instance * 16 + 4);
    let agent = tiny_sac(&mut rng);
    let (q1, q2) = agent.critics();
    let q_in = random_x(4, 3, &mut rng);
    let targets = random_x(4, 1, &mut rng);
    let n1 = q1.flat_params().len();
    let mut at = q1.flat_params();
    at.extend(q2.flat_params());

    let loss_on = |m1: &Mlp<Real>, m2: &Mlp<Real>| {
        let mut tape = Tape::new();
        let t1 = m1.register(&mut tape);
        let t2 = m2.register(&mut tape);
        let x = tape.constant(q_in.clone());
        let y = tape.constant(targets.clone());
        let p1 = t1.forward(&mut tape, x).unwrap();
        let p2 = t2.forward(&mut tape, x).unwrap();
        let d1 = tape.sub(p1, y);
        let d2 = tape.sub(p2, y);
        let s1 = tape.square(d1);
        let s2 = tape.square(d2);
        let l1 = tape.mean(s1);
        let l2 = tape.mean(s2);
        let loss = tape.add(l1, l2);
        (tape, t1, t2, loss)
    };
    let loss_of = |flat: &[Real]| {
        let mut m1 = q1.clone();
        m1.set_flat_params(&flat[..n1]).unwrap();
        let mut m2 = q2.clone();
        m2.set_flat_params(&flat[n1..]).unwrap();
        let (mut tape, _, _, loss) = loss_on(&m1, &m2);
        tape.value(loss).item().unwrap()
    };
    let numeric = central_diff(&loss_of, &at, GRAD_H);

    let (mut tape, t1, t2, loss) = loss_on(q1, q2);
    let mut grads = tape.backward(loss).unwrap();
    let mut analytic = Vec::new();
    for g in t1.grads(&mut grads, q1) {
        analytic.extend_from_slice(g.data());
    }
    for g in t2.grads(&mut grads, q2) {
        analytic.extend_from_slice(g.data());
    }
    max_rel_err(&analytic, &numeric)
}

/// Actor objective `mean(alpha log pi - min Q)` with frozen critics and a
/// fixed reparameterization noise draw; optionally adds a weighted cloning
/// term over a fixed demonstration subset that passed the critic filter,
/// which is the filtered-cloning objective.
fn actor_gradcheck(instance: u64, with_bc: bool) -> Real {
    let mut rng = ChaCha20Rng::seed_from_u64(instance * 16 + if with_bc { 6 } else { 5 });
    let agent = tiny_sac(&mut rng);
    let actor = agent.actor();
    let (q1, q2) = agent.critics();
    let alpha = agent.alpha();
    let states = random_x(4, 2, &mut rng);
    let noise = sample_noise(4, 1, &mut rng);

    // Fixed demonstration subset: rows whose stored action out-scores the
    // policy's sample under the smaller critic, the selection the optimizer
    // freezes before differentiating. Instances that keep no row fall back
    // to the full batch so the cloning term stays present.
    let bc_data = with_bc.then(|| {
        let demo_s = random_x(5, 2, &mut rng);
        let demo_a = random_x(5, 1, &mut rng);
        let demo_noise = sample_noise(5, 1, &mut rng);
        let (pi_a, _) = policy_eval(actor, &demo_s, 1, Some(&demo_noise)).unwrap();
        let min_q = |s: &Tensor<Real>, a: &Tensor<Real>| -> Vec<Real> {
            let x = s.hcat(a).unwrap();
            let v1 = q1.eval(&x).unwrap();
            let v2 = q2.eval(&x).unwrap();
            v1.data().iter().zip(v2.data()).map(|(&p, &q)| p.min(q)).collect()
        };
        let qd = min_q(&demo_s, &demo_a);
        let qp = min_q(&demo_s, &pi_a);
        let keep: Vec<usize> = (0..5).filter(|&r| qd[r] > qp[r]).collect();
        let rows = if keep.is_empty() { (0..5).collect() } else { keep };
        let s = Tensor::from_rows(&rows.iter().map(|&r| demo_s.row_slice(r).to_vec()).collect::<Vec<_>>()).unwrap();
        let a = Tensor::from_rows(&rows.iter().map(|&r| demo_a.row_slice(r).to_vec()).collect::<Vec<_>>()).unwrap();
        (s, a)
    });

    let loss_on = |m: &Mlp<Real>| {
        let mut tape = Tape::new();
        let ta = m.register(&mut tape);
        let f1 = q1.register_frozen(&mut tape);
        let f2 = q2.register_frozen(&mut tape);
        let sv = tape.constant(states.clone());
        let (actions, logp) = policy_taped(&mut tape, &ta, sv, 1, &noise).unwrap();
        let q_input = tape.concat_cols(sv, actions);
        let v1 = f1.forward(&mut tape, q_input).unwrap();
        let v2 = f2.forward(&mut tape, q_input).unwrap();
        let qmin = tape.min_elem(v1, v2);
        let ent = tape.scale(logp, alpha);
        let gap = tape.sub(ent, qmin);
        let mut loss = tape.mean(gap);
        if let Some((s, a)) = &bc_data {
            let bc = bc_nll_taped(&mut tape, &ta, s, a).unwrap();
            let scaled = tape.scale(bc, 0.7);
            loss = tape.add(loss, scaled);
        }
        (tape, ta, loss)
    };
    let loss_of = |flat: &[Real]| {
        let mut m = actor.clone();
        m.set_flat_params(flat).unwrap();
        let (mut tape, _, loss) = loss_on(&m);
        tape.value(loss).item().unwrap()
    };
    let at = actor.flat_params();
    let numeric = central_diff(&loss_of, &at, GRAD_H);

    let (mut tape, ta, loss) = loss_on(actor);
    let mut grads = tape.backward(loss).unwrap();
    let mut analytic = Vec::new();
    for g in ta.grads(&mut grads, actor) {
        analytic.extend_from_slice(g.data());
    }
    max_rel_err(&analytic, &numeric)
}

/// Plain cloning NLL over random demonstration pairs.
fn bc_gradcheck(instance: u64) -> Real {
    let mut rng = ChaCha20Rng::seed_from_u64(instance * 16 + 7);
    let agent = tiny_sac(&mut rng);
    let actor = agent.actor();
    let s = random_x(4, 2, &mut rng);
    let a = random_x(4, 1, &mut rng);

    let loss_of = |flat: &[Real]| {
        let mut m = actor.clone();
        m.set_flat_params(flat).unwrap();
        let mut tape = Tape::new();
        let ta = m.register(&mut tape);
        let v = bc_nll_taped(&mut tape, &ta, &s, &a).unwrap();
        tape.value(v).item().unwrap()
    };
    let at = actor.flat_params();
    let numeric = central_diff(&loss_of, &at, GRAD_H);

    let mut tape = Tape::new();
    let ta = actor.register(&mut tape);
    let v = bc_nll_taped(&mut tape, &ta, &s, &a).unwrap();
    let mut grads = tape.backward(v).unwrap();
    let mut analytic = Vec::new();
    for g in ta.grads(&mut grads, actor) {
        analytic.extend_from_slice(g.data());
    }
    max_rel_err(&analytic, &numeric)
}

#[test]
fn criterion_2_gradients() {
    let _lock = gate();
    let started = Instant::now();

    let losses: Vec<(&str, Box<dyn Fn(u64) -> Real>)> = vec![
        ("labeled-preference", Box::new(|i| reward_loss_gradcheck(0, i))),
        ("virtual-preference", Box::new(|i| reward_loss_gradcheck(1, i))),
        ("reliability-weighted", Box::new(|i| reward_loss_gradcheck(2, i))),
        ("initialization", Box::new(|i| reward_loss_gradcheck(3, i))),
        ("sac-critic", Box::new(critic_gradcheck)),
        ("sac-actor", Box::new(|i| actor_gradcheck(i, false))),
        ("cloning", Box::new(bc_gradcheck)),
        ("filtered-cloning", Box::new(|i| actor_gradcheck(i, true))),
    ];
    let mut worst: Vec<(String, Real)> = Vec::new();
    let mut fail = None;
    'outer: for (name, check) in &losses {
        let mut worst_err = 0.0_f64;
        for instance in 0..GRAD_INSTANCES {
            let err = check(instance);
            worst_err = worst_err.max(err);
            if err >= GRAD_TOL {
                fail = Some(format!("{name} instance {instance} rel err {err:.2e}"));
                break 'outer;
            }
        }
        worst.push((name.to_string(), worst_err));
    }
    let elapsed = started.elapsed();
    let pass = fail.is_none() && elapsed < Duration::from_secs(300);
    let summary = worst
        .iter()
        .map(|(n, e)| format!("{n} {e:.1e}"))
        .collect::<Vec<_>>()
        .join(", ");
    report(
        2,
        pass,
        started,
        &format!("8 losses x {GRAD_INSTANCES} instances, worst rel err: {summary}"),
    );
    assert!(fail.is_none(), "gradient check failed: {}", fail.unwrap());
    assert!(elapsed < Duration::from_secs(300), "gradient suite took {elapsed:?}");
}

// --- criterion 3: loss identities ------------------------------------------

/// Reliability net computing a constant logit regardless of input: all
/// weights zero, final bias fixed.
fn constant_logit_reliability(bias: Real) -> ReliabilityNet {
    let mut rng = ChaCha20Rng::seed_from_u64(0);
    let mut rel = ReliabilityNet::new(&[4], &mut rng).unwrap();
    for layer in rel.mlp_mut().layers_mut() {
        layer.w.data_mut().fill(0.0);
        layer.b.data_mut().fill(0.0);
    }
    rel.mlp_mut().layers_mut().last_mut().unwrap().b.data_mut()[0] = bias;
    rel
}

#[test]
fn criterion_3_loss_identities() {
    let _lock = gate();
    let started = Instant::now();
    let mut rng = ChaCha20Rng::seed_from_u64(33);
    let net = RewardNet::new(2, 1, &[8, 8], &mut rng).unwrap();
    let xd = random_x(16, 3, &mut rng);
    let xr = random_x(16, 3, &mut rng);
    let index = Tensor::new(16, 1, (0..16).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap();

    // Saturated reliability: logit 40 makes sigmoid exactly 1 in f64, so the
    // weighted probability must equal the plain pairwise-comparison
    // probability bit for bit.
    let rel_one = constant_logit_reliability(40.0);
    let mut tape = Tape::new();
    let tr = net.register(&mut tape);
    let ta = rel_one.register(&mut tape);
    let (prob, alpha) = reliability_weighted_prob(&mut tape, &tr, &ta, &xd, &xr, &index, true).unwrap();
    let alpha_vals = tape.value(alpha).clone();
    let xd_v = tape.constant(xd.clone());
    let xr_v = tape.constant(xr.clone());
    let rd = tr.forward(&mut tape, xd_v).unwrap();
    let rr = tr.forward(&mut tape, xr_v).unwrap();
    let diff = tape.sub(rd, rr);
    let plain = tape.sigmoid(diff);
    let prob_vals = tape.value(prob).clone();
    let plain_vals = tape.value(plain).clone();
    let alpha_saturated = alpha_vals.data().iter().all(|&a| a == 1.0);
    let exact = prob_vals
        .data()
        .iter()
        .zip(plain_vals.data())
        .all(|(&p, &q)| p.to_bits() == q.to_bits());

    // Indifferent reliability: logit 0 gives alpha one half; the pair
    // probability collapses to 1/2, the loss to ln 2, and the reward
    // gradient to zero.
    let rel_half = constant_logit_reliability(0.0);
    let mut tape = Tape::new();
    let tr = net.register(&mut tape);
    let ta = rel_half.register(&mut tape);
    let (prob, _) = reliability_weighted_prob(&mut tape, &tr, &ta, &xd, &xr, &index, true).unwrap();
    let max_prob_gap = tape
        .value(prob)
        .data()
        .iter()
        .map(|&p| (p - 0.5).abs())
        .fold(0.0_f64, f64::max);
    let mut tape = Tape::new();
    let tr = net.register(&mut tape);
    let ta = rel_half.register(&mut tape);
    let out = reliability_weighted_loss(&mut tape, &tr, &ta, &xd, &xr, &index, true).unwrap();
    let loss_val = tape.value(out.loss).item().unwrap();
    let loss_gap = (loss_val - std::f64::consts::LN_2).abs();
    let mut grads = tape.backward(out.loss).unwrap();
    let grad_norm = tr
        .grads(&mut grads, net.mlp())
        .iter()
        .flat_map(|g| g.data().iter())
        .map(|g| g * g)
        .sum::<Real>()
        .sqrt();

    // Swapping every pair and complementing the labels must leave the
    // labeled-preference loss unchanged.
    let batch = random_clip_batch(6, 5, 3, &mut rng);
    let swapped = PairedClipBatch {
        x1: batch.x2.clone(),
        bounds1: batch.bounds2.clone(),
        x2: batch.x1.clone(),
        bounds2: batch.bounds1.clone(),
        labels: batch.labels.map(|c| 1.0 - c),
    };
    let eval_pref = |b: &PairedClipBatch| {
        let mut tape = Tape::new();
        let tr = net.register(&mut tape);
        let v = preference_loss(&mut tape, &tr, b).unwrap();
        tape.value(v).item().unwrap()
    };
    let antisym_gap = (eval_pref(&batch) - eval_pref(&swapped)).abs();

    let pass = alpha_saturated
        && exact
        && max_prob_gap < 1e-12
        && loss_gap < 1e-12
        && grad_norm < 1e-12
        && antisym_gap < 1e-12;
    report(
        3,
        pass,
        started,
        &format!(
            "saturated-weight exact match {exact}, half-weight prob gap {max_prob_gap:.1e}, \
             loss-ln2 gap {loss_gap:.1e}, reward grad norm {grad_norm:.1e}, swap gap {antisym_gap:.1e}"
        ),
    );
    assert!(alpha_saturated, "logit 40 did not saturate: {:?}", alpha_vals.data());
    assert!(exact, "saturated weighting is not bitwise the plain probability");
    assert!(max_prob_gap < 1e-12, "half-weight probability gap {max_prob_gap}");
    assert!(loss_gap < 1e-12, "half-weight loss {loss_val} vs ln 2");
    assert!(grad_norm < 1e-12, "half-weight reward gradient norm {grad_norm}");
    assert!(antisym_gap < 1e-12, "swap antisymmetry gap {antisym_gap}");
}

// --- criterion 4: preference counts ---------------------------------------

#[test]
fn criterion_4_preference_counts() {
    let _lock = gate();
    let started = Instant::now();
    let fx = &line_fixtures()[0];
    let ds = load_trajectories(&fx.data_path()).unwrap();

    let mut rng = derived_rng(fx.seed, DATA_STREAM, 1);
    let clips = sample_clips(&ds, CLIP_LEN, &mut rng).unwrap();
    let prefs = label_preferences(&ds, &clips, Pairing::All, &mut rng).unwrap();
    let mismatches = verify_labels(&ds, &clips, &prefs).unwrap();

    let half: Vec<_> = clips[..25].to_vec();
    let mut rng = derived_rng(fx.seed, DATA_STREAM, 2);
    let prefs_half = label_preferences(&ds, &half, Pairing::All, &mut rng).unwrap();
    let mismatches_half = verify_labels(&ds, &half, &prefs_half).unwrap();

    let pass = clips.len() == 50
        && prefs.len() == 1225
        && prefs_half.len() == 300
        && mismatches == 0
        && mismatches_half == 0;
    report(
        4,
        pass,
        started,
        &format!(
            "{} clips -> {} pairs, 25 clips -> {} pairs, {} label mismatches",
            clips.len(),
            prefs.len(),
            prefs_half.len(),
            mismatches + mismatches_half
        ),
    );
    assert_eq!(clips.len(), 50);
    assert_eq!(prefs.len(), 1225);
    assert_eq!(prefs_half.len(), 300);
    assert_eq!(mismatches, 0);
    assert_eq!(mismatches_half, 0);
}

// --- criterion 5: reward-learning fidelity ---------------------------------

#[test]
fn criterion_5_reward_fidelity() {
    let _lock = gate();
    let started = Instant::now();
    let scratch = tempfile::tempdir().unwrap();

    let mut lines = Vec::new();
    let mut all_pass = true;
    for fx in line_fixtures() {
        let cfg = fixture_config(Algo::Pbrl, "linewalker", fx);
        let data = pbail::trainers::load_data(&cfg).unwrap();
        let mut log = RewardLossLog::create(&scratch.path().join(format!("loss_{}.csv", fx.seed))).unwrap();
        let net = pretrain_reward(&cfg, &data, &mut log).unwrap();
        let accuracy = preference_accuracy(&net, &data).unwrap();

        let inferred: Vec<Real> = data
            .clips
            .iter()
            .map(|c| inferred_return(&net, &clip_rows(&data.ds, c).unwrap()).unwrap())
            .collect();
        let true_returns: Vec<Real> = data.clips.iter().map(|c| clip_true_return(&data.ds, c)).collect();
        let tau = kendall_tau_b(&inferred, &true_returns).unwrap();

        let seed_pass = accuracy >= 0.9 && tau >= 0.6;
        all_pass &= seed_pass;
        lines.push(format!("seed {}: acc {:.3} tau {:.3}", fx.seed, accuracy, tau));
    }
    let elapsed = started.elapsed();
    let pass = all_pass && elapsed < Duration::from_secs(600);
    report(5, pass, started, &lines.join("; "));
    assert!(all_pass, "a seed missed the accuracy/correlation bars: {lines:?}");
    assert!(elapsed < Duration::from_secs(600), "reward fidelity took {elapsed:?}");
}

// --- criterion 6: data-matching ablation ------------------------------------

#[test]
fn criterion_6_data_matching_ablation() {
    let _lock = gate();
    let started = Instant::now();
    let runs = fixture_root().join("ablation_runs");

    let mut minus_norm = Vec::new();
    let mut full_norm = Vec::new();
    let mut data_norm = Vec::new();
    for fx in line_fixtures() {
        for algo in [Algo::PbailMinus, Algo::Pbail] {
            let cell = fixture_cell(algo, "linewalker", 2);
            let run_dir = runs.join(format!("{algo}_seed{}", fx.seed));
            let result = run_cell(algo, fx.seed, &cell, &fx.data_dir, &run_dir, false).unwrap();
            match algo {
                Algo::PbailMinus => minus_norm.push(result.summary.final_return_normalized),
                _ => full_norm.push(result.summary.final_return_normalized),
            }
        }
        data_norm.push(fx.data_norm());
    }
    let mean = |v: &[Real]| v.iter().sum::<Real>() / v.len() as Real;
    let (m_minus, m_full, m_data) = (mean(&minus_norm), mean(&full_norm), mean(&data_norm));
    let ablation_gap = (m_minus - m_data).abs();
    let full_margin = m_full - m_data;

    let elapsed = started.elapsed();
    let pass = ablation_gap <= 0.15 && full_margin >= 0.1 && elapsed < Duration::from_secs(2700);
    report(
        6,
        pass,
        started,
        &format!(
            "5-seed means: data {m_data:.3}, ablation {m_minus:.3} (gap {ablation_gap:.3}), \
             full {m_full:.3} (margin {full_margin:+.3})"
        ),
    );
    assert!(
        ablation_gap <= 0.15,
        "ablation mean {m_minus:.3} vs data mean {m_data:.3}: gap {ablation_gap:.3} > 0.15 \
         (per-seed {minus_norm:?} vs {data_norm:?})"
    );
    assert!(
        full_margin >= 0.1,
        "full method mean {m_full:.3} does not exceed data mean {m_data:.3} by 0.1 \
         (per-seed {full_norm:?} vs {data_norm:?})"
    );
    assert!(elapsed < Duration::from_secs(2700), "ablation took {elapsed:?}");
}

// --- criterion 7: generalizability protocol --------------------------------

/// Quadratic-time tie-corrected rank correlation, written independently of
/// the production implementation as its oracle.
fn tau_b_slow(x: &[Real], y: &[Real]) -> Real {
    let n = x.len();
    let (mut concordant, mut discordant) = (0i64, 0i64);
    let (mut ties_x, mut ties_y) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i].partial_cmp(&x[j]).unwrap();
            let dy = y[i].partial_cmp(&y[j]).unwrap();
            use std::cmp::Ordering::Equal;
            if dx == Equal {
                ties_x += 1;
            }
            if dy == Equal {
                ties_y += 1;
            }
            if dx != Equal && dy != Equal {
                if dx == dy {
                    concordant += 1;
                } else {
                    discordant += 1;
                }
            }
        }
    }
    let n0 = (n * (n - 1) / 2) as i64;
    let denom = (((n0 - ties_x) as Real) * ((n0 - ties_y) as Real)).sqrt();
    (concordant - discordant) as Real / denom
}

#[test]
fn criterion_7_generalizability_protocol() {
    let _lock = gate();
    let started = Instant::now();
    let runs = fixture_root().join("protocol_runs");

    let mut taus: HashMap<(Algo, u64), Real> = HashMap::new();
    let mut oracle_gap_max = 0.0_f64;
    let mut entries_checked = 0usize;
    let mut range_ok = true;
    for fx in point_fixtures() {
        for algo in [Algo::Pbail, Algo::Pbrl] {
            let mut cell = fixture_cell(algo, "pointreach", 10);
            cell.trainer.checkpoint_interval = 600;
            let run_dir = runs.join(format!("{algo}_seed{}", fx.seed));
            let result = run_cell(algo, fx.seed, &cell, &fx.data_dir, &run_dir, false).unwrap();
            let mean_tau = result.mean_tau.expect("protocol must run");
            taus.insert((algo, fx.seed), mean_tau);

            let report_json = fs::read_to_string(run_dir.join("rank_correlation.json")).unwrap();
            let report: RankCorrelationReport = serde_json::from_str(&report_json).unwrap();
            let mut env = make_env("pointreach").unwrap();
            let (obs_dim, act_dim) = (env.obs_dim(), env.act_dim());
            for entry in &report.entries {
                range_ok &= (-1.0..=1.0).contains(&entry.tau);
                let nets: HashMap<String, Mlp<Real>> =
                    load_nets(&run_dir.join(format!("checkpoints/step_{}.bin", entry.step)))
                        .unwrap()
                        .into_iter()
                        .collect();
                let actor = nets.get("actor").unwrap();
                let reward =
                    RewardNet::from_mlp(nets.get("reward").unwrap().clone(), obs_dim, act_dim)
                        .unwrap();
                let mut rng = derived_rng(fx.seed, PROTOCOL_STREAM, entry.step);
                let (rows, true_returns) =
                    sampled_policy_rollouts(env.as_mut(), actor, entry.n_rollouts, &mut rng)
                        .unwrap();
                let inferred: Vec<Real> = rows
                    .iter()
                    .map(|r| inferred_return(&reward, r).unwrap())
                    .collect();
                let oracle = tau_b_slow(&inferred, &true_returns);
                oracle_gap_max = oracle_gap_max.max((oracle - entry.tau).abs());
                entries_checked += 1;
            }
        }
    }
    let wins = POINT_SEEDS
        .iter()
        .filter(|&&s| taus[&(Algo::Pbail, s)] > taus[&(Algo::Pbrl, s)])
        .count();
    let detail_taus = POINT_SEEDS
        .iter()
        .map(|&s| {
            format!(
                "seed {s}: {:.3} vs {:.3}",
                taus[&(Algo::Pbail, s)],
                taus[&(Algo::Pbrl, s)]
            )
        })
        .collect::<Vec<_>>()
        .join("; ");

    let pass = range_ok && oracle_gap_max < 1e-12 && entries_checked > 0;
    report(
        7,
        pass,
        started,
        &format!(
            "{entries_checked} checkpoint correlations match the quadratic oracle \
             (max gap {oracle_gap_max:.1e}); adversarial beats pretrained in {wins}/5 seeds \
             [directional, recorded]: {detail_taus}"
        ),
    );
    assert!(range_ok, "a correlation left [-1, 1]");
    assert!(
        oracle_gap_max < 1e-12,
        "production correlation disagrees with the quadratic oracle by {oracle_gap_max:.2e}"
    );
    assert!(entries_checked > 0, "no protocol entries were produced");
}

// --- criterion 8: bitwise rerun determinism ---------------------------------

#[test]
fn criterion_8_bitwise_determinism() {
    let _lock = gate();
    let started = Instant::now();
    let fx = &line_fixtures()[0];

    let mut cell = fixture_cell(Algo::Pbail, "linewalker", 2);
    cell.trainer.total_steps = 3_000;
    cell.trainer.k_init = 800;
    cell.trainer.warmup_steps = 500;
    cell.trainer.eval_interval = 500;
    cell.trainer.eval_episodes = 5;
    cell.trainer.checkpoint_interval = 1_000;
    cell.early_fraction = 1.0;
    cell.rollouts = 4;

    let run_dir = fixture_root().join("determinism_run");
    run_cell(Algo::Pbail, fx.seed, &cell, &fx.data_dir, &run_dir, false).unwrap();
    let first_summary = fs::read(run_dir.join("final_summary.json")).unwrap();
    let first_metrics = fs::read(run_dir.join("metrics.csv")).unwrap();

    run_cell(Algo::Pbail, fx.seed, &cell, &fx.data_dir, &run_dir, false).unwrap();
    let second_summary = fs::read(run_dir.join("final_summary.json")).unwrap();
    let second_metrics = fs::read(run_dir.join("metrics.csv")).unwrap();

    let pass = first_summary == second_summary && first_metrics == second_metrics;
    report(
        8,
        pass,
        started,
        &format!(
            "rerun summary identical: {}; metrics identical: {}",
            first_summary == second_summary,
            first_metrics == second_metrics
        ),
    );
    assert_eq!(first_summary, second_summary, "final_summary.json differs across reruns");
    assert_eq!(first_metrics, second_metrics, "metrics.csv differs across reruns");
}

// Keep the unused-import surface honest for items only used in some cfgs.
#[allow(dead_code)]
fn _type_checks(_: &OfflineDataset, _: &PreferenceSample, _: &dyn Fn(&[usize]) -> ()) {
    let _ = build_clip_batch;
}
