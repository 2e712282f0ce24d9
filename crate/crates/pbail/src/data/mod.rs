//! Offline preference data: trajectory datasets rolled out from behavior
//! checkpoints, clip extraction, and synthetic labeling by true returns.
//!
//! The pipeline is: train behavior checkpoints to fixed performance levels
//! ([`behavior`]), roll an equal number of trajectories from each
//! checkpoint into an [`OfflineDataset`], cut one uniformly placed clip per
//! trajectory, and label clip pairs by comparing true returns (ties get
//! 0.5). Everything downstream consumes the dataset through the tensor
//! builders at the bottom of this module.

pub mod behavior;
pub mod files;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{rollout, ContinuousEnv, Transition};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::reward::PairedClipBatch;
use crate::sac::{policy_eval, sample_noise};
use crate::tensor::Tensor;
use crate::Real;

pub use behavior::{
    train_behavior_checkpoints, BehaviorCheckpoint, BehaviorConfig, BehaviorTraining, DataVersion,
};
pub use files::{
    load_clips, load_preferences, load_trajectories, save_clips, save_preferences,
    save_trajectories,
};

/// One rolled-out episode with its provenance.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// Which behavior checkpoint produced it.
    pub source_policy: u32,
    /// True (oracle) return; consumed only by labeling and diagnostics.
    pub true_return: Real,
    /// Global, monotonically assigned trajectory index.
    pub index: u64,
}

/// A window into one trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Clip {
    pub traj: usize,
    pub start: usize,
    pub len: usize,
}

/// A labeled comparison between two clips, by index into the clip list.
/// `c` = 1 means clip `a` is preferred, 0 means `b`, 0.5 marks a tie.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSample {
    pub a: usize,
    pub b: usize,
    pub c: Real,
}

/// How clips are paired for labeling.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    /// Every unordered pair of clips.
    All,
    /// Every unordered pair among `k` clips chosen by a seeded shuffle.
    Subset(usize),
}

impl std::fmt::Display for Pairing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pairing::All => f.write_str("all"),
            Pairing::Subset(k) => write!(f, "subset:{k}"),
        }
    }
}

impl std::str::FromStr for Pairing {
    type Err = Error;

    /// Accepts `all` or `subset:K`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Pairing::All);
        }
        if let Some(k) = s.strip_prefix("subset:") {
            let k: usize = k
                .parse()
                .map_err(|_| Error::Config(format!("bad subset size in pairing {s:?}")))?;
            return Ok(Pairing::Subset(k));
        }
        Err(Error::Config(format!(
            "unknown pairing {s:?} (expected all or subset:K)"
        )))
    }
}

impl Serialize for Pairing {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pairing {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug)]
pub struct OfflineDataset {
    pub env: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub trajectories: Vec<Trajectory>,
}

impl OfflineDataset {
    pub fn n_transitions(&self) -> usize {
        self.trajectories.iter().map(|t| t.transitions.len()).sum()
    }

    pub fn min_trajectory_len(&self) -> usize {
        self.trajectories
            .iter()
            .map(|t| t.transitions.len())
            .min()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trajectories.is_empty() {
            return Err(Error::Data("offline dataset has no trajectories".into()));
        }
        for (k, traj) in self.trajectories.iter().enumerate() {
            if traj.transitions.is_empty() {
                return Err(Error::Data(format!("trajectory {k} is empty")));
            }
            if k > 0 && traj.index <= self.trajectories[k - 1].index {
                return Err(Error::Data(format!(
                    "trajectory indices not strictly increasing at position {k}"
                )));
            }
            for t in &traj.transitions {
                if t.state.len() != self.obs_dim
                    || t.action.len() != self.act_dim
                    || t.next_state.len() != self.obs_dim
                {
                    return Err(Error::ShapeMismatch(format!(
                        "trajectory {k} has transitions with wrong dims"
                    )));
                }
            }
            let total: Real = traj.transitions.iter().map(|t| t.reward).sum();
            if (total - traj.true_return).abs() > 1e-9 {
                return Err(Error::Data(format!(
                    "trajectory {k} return field {} disagrees with summed rewards {total}",
                    traj.true_return
                )));
            }
        }
        Ok(())
    }
}

/// Rolls `n_trajectories` episodes split equally across the checkpoints,
/// with stochastic (sampled) actions so deterministic-reset tasks still
/// produce varied data. Trajectories are generated and indexed in
/// checkpoint order.
pub fn generate_offline_dataset(
    env: &mut dyn ContinuousEnv,
    checkpoints: &[Mlp<Real>],
    n_trajectories: usize,
    rng: &mut ChaCha20Rng,
) -> Result<OfflineDataset> {
    if checkpoints.is_empty() {
        return Err(Error::Data("no behavior checkpoints given".into()));
    }
    if n_trajectories == 0 || n_trajectories % checkpoints.len() != 0 {
        return Err(Error::Data(format!(
            "{} trajectories cannot be split equally across {} checkpoints",
            n_trajectories,
            checkpoints.len()
        )));
    }
    let act_dim = env.act_dim();
    for (k, actor) in checkpoints.iter().enumerate() {
        if actor.in_dim() != env.obs_dim() || actor.out_dim() != 2 * act_dim {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint {k} maps {} -> {}, env wants {} -> {}",
                actor.in_dim(),
                actor.out_dim(),
                env.obs_dim(),
                2 * act_dim
            )));
        }
    }
    let per_checkpoint = n_trajectories / checkpoints.len();
    let mut trajectories = Vec::with_capacity(n_trajectories);
    let mut index = 0u64;
    for (cp, actor) in checkpoints.iter().enumerate() {
        for _ in 0..per_checkpoint {
            let (transitions, true_return) = rollout(env, rng, index as usize, |state, rng| {
                let states = Tensor::row(state);
                let noise = sample_noise(1, act_dim, rng);
                let (a, _) =
                    policy_eval(actor, &states, act_dim, Some(&noise)).expect("dims prechecked");
                a.data().to_vec()
            })?;
            trajectories.push(Trajectory {
                transitions,
                source_policy: cp as u32,
                true_return,
                index,
            });
            index += 1;
        }
    }
    let ds = OfflineDataset {
        env: env.name().to_string(),
        obs_dim: env.obs_dim(),
        act_dim,
        trajectories,
    };
    ds.validate()?;
    Ok(ds)
}

/// Cuts one clip per trajectory at a uniform start offset.
pub fn sample_clips(
    ds: &OfflineDataset,
    clip_len: usize,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<Clip>> {
    if clip_len == 0 {
        return Err(Error::Data("clip length must be positive".into()));
    }
    let shortest = ds.min_trajectory_len();
    if clip_len > shortest {
        return Err(Error::Data(format!(
            "clip length {clip_len} exceeds shortest trajectory length {shortest}"
        )));
    }
    Ok(ds
        .trajectories
        .iter()
        .enumerate()
        .map(|(traj, t)| {
            let latest = t.transitions.len() - clip_len;
            Clip {
                traj,
                start: rng.gen_range(0..=latest),
                len: clip_len,
            }
        })
        .collect())
}

/// True (oracle) return of the clip window.
pub fn clip_true_return(ds: &OfflineDataset, clip: &Clip) -> Real {
    ds.trajectories[clip.traj].transitions[clip.start..clip.start + clip.len]
        .iter()
        .map(|t| t.reward)
        .sum()
}

/// The labeling rule: 1 when the first return is strictly larger, 0 when
/// strictly smaller, 0.5 on an exact tie.
pub fn preference_label(return_a: Real, return_b: Real) -> Real {
    if return_a > return_b {
        1.0
    } else if return_a < return_b {
        0.0
    } else {
        0.5
    }
}

/// Labels clip pairs with the ground-truth oracle. `All` pairs every clip
/// with every other; `Subset(k)` first shuffles clip indices with `rng`,
/// keeps k, and pairs those. Pairs are emitted with `a < b` in clip-index
/// order, never comparing a clip to itself.
pub fn label_preferences(
    ds: &OfflineDataset,
    clips: &[Clip],
    pairing: Pairing,
    rng: &mut ChaCha20Rng,
) -> Result<Vec<PreferenceSample>> {
    if clips.len() < 2 {
        return Err(Error::Data("need at least two clips to form pairs".into()));
    }
    let chosen: Vec<usize> = match pairing {
        Pairing::All => (0..clips.len()).collect(),
        Pairing::Subset(k) => {
            if k < 2 || k > clips.len() {
                return Err(Error::Data(format!(
                    "subset size {k} invalid for {} clips",
                    clips.len()
                )));
            }
            let mut idx: Vec<usize> = (0..clips.len()).collect();
            idx.shuffle(rng);
            idx.truncate(k);
            idx.sort_unstable();
            idx
        }
    };
    let returns: Vec<Real> = clips.iter().map(|c| clip_true_return(ds, c)).collect();
    let mut out = Vec::with_capacity(chosen.len() * (chosen.len() - 1) / 2);
    for (i, &a) in chosen.iter().enumerate() {
        for &b in &chosen[i + 1..] {
            out.push(PreferenceSample {
                a,
                b,
                c: preference_label(returns[a], returns[b]),
            });
        }
    }
    Ok(out)
}

/// Re-derives every label from the oracle and counts disagreements.
pub fn verify_labels(
    ds: &OfflineDataset,
    clips: &[Clip],
    prefs: &[PreferenceSample],
) -> Result<usize> {
    let mut mismatches = 0;
    for p in prefs {
        if p.a >= clips.len() || p.b >= clips.len() || p.a == p.b {
            return Err(Error::Data(format!(
                "preference ({}, {}) does not reference two distinct clips",
                p.a, p.b
            )));
        }
        let expect = preference_label(
            clip_true_return(ds, &clips[p.a]),
            clip_true_return(ds, &clips[p.b]),
        );
        if p.c != expect {
            mismatches += 1;
        }
    }
    Ok(mismatches)
}

/// Concatenated (state, action) rows for one clip.
pub fn clip_rows(ds: &OfflineDataset, clip: &Clip) -> Result<Tensor<Real>> {
    let traj = ds
        .trajectories
        .get(clip.traj)
        .ok_or_else(|| Error::Data(format!("clip references trajectory {}", clip.traj)))?;
    if clip.len == 0 || clip.start + clip.len > traj.transitions.len() {
        return Err(Error::Data(format!(
            "clip window {}..{} escapes trajectory of length {}",
            clip.start,
            clip.start + clip.len,
            traj.transitions.len()
        )));
    }
    let width = ds.obs_dim + ds.act_dim;
    let mut data = Vec::with_capacity(clip.len * width);
    for t in &traj.transitions[clip.start..clip.start + clip.len] {
        data.extend_from_slice(&t.state);
        data.extend_from_slice(&t.action);
    }
    Tensor::new(clip.len, width, data)
}

/// Assembles the flattened loss input for the chosen preference samples.
pub fn build_clip_batch(
    ds: &OfflineDataset,
    clips: &[Clip],
    prefs: &[PreferenceSample],
    chosen: &[usize],
) -> Result<PairedClipBatch> {
    if chosen.is_empty() {
        return Err(Error::Data("empty preference minibatch".into()));
    }
    let width = ds.obs_dim + ds.act_dim;
    let mut x1 = Vec::new();
    let mut x2 = Vec::new();
    let mut bounds1 = vec![0usize];
    let mut bounds2 = vec![0usize];
    let mut labels = Vec::with_capacity(chosen.len());
    for &k in chosen {
        let p = prefs
            .get(k)
            .ok_or_else(|| Error::Data(format!("preference index {k} out of range")))?;
        let ca = clips
            .get(p.a)
            .ok_or_else(|| Error::Data(format!("clip index {} out of range", p.a)))?;
        let cb = clips
            .get(p.b)
            .ok_or_else(|| Error::Data(format!("clip index {} out of range", p.b)))?;
        x1.extend_from_slice(clip_rows(ds, ca)?.data());
        x2.extend_from_slice(clip_rows(ds, cb)?.data());
        bounds1.push(x1.len() / width);
        bounds2.push(x2.len() / width);
        labels.push(p.c);
    }
    Ok(PairedClipBatch {
        x1: Tensor::new(bounds1[bounds1.len() - 1], width, x1)?,
        bounds1,
        x2: Tensor::new(bounds2[bounds2.len() - 1], width, x2)?,
        bounds2,
        labels: Tensor::new(chosen.len(), 1, labels)?,
    })
}

/// All offline transitions as (state, action) rows, in trajectory order.
pub fn transition_x_matrix(ds: &OfflineDataset) -> Tensor<Real> {
    let width = ds.obs_dim + ds.act_dim;
    let mut data = Vec::with_capacity(ds.n_transitions() * width);
    for traj in &ds.trajectories {
        for t in &traj.transitions {
            data.extend_from_slice(&t.state);
            data.extend_from_slice(&t.action);
        }
    }
    Tensor::new(ds.n_transitions(), width, data).expect("consistent dims")
}

/// Uniformly sampled rows (with replacement) of a matrix.
pub fn sample_rows(matrix: &Tensor<Real>, n: usize, rng: &mut ChaCha20Rng) -> Tensor<Real> {
    assert!(matrix.rows() > 0, "sampling rows of an empty matrix");
    let mut data = Vec::with_capacity(n * matrix.cols());
    for _ in 0..n {
        data.extend_from_slice(matrix.row_slice(rng.gen_range(0..matrix.rows())));
    }
    Tensor::new(n, matrix.cols(), data).expect("consistent dims")
}

/// Uniformly sampled (state, action) pairs for behavior cloning.
pub fn bc_batch(
    ds: &OfflineDataset,
    n: usize,
    rng: &mut ChaCha20Rng,
) -> Result<(Tensor<Real>, Tensor<Real>)> {
    if n == 0 {
        return Err(Error::Data("empty cloning batch".into()));
    }
    let flat: Vec<&Transition> = ds
        .trajectories
        .iter()
        .flat_map(|t| t.transitions.iter())
        .collect();
    let mut states = Vec::with_capacity(n * ds.obs_dim);
    let mut actions = Vec::with_capacity(n * ds.act_dim);
    for _ in 0..n {
        let t = flat[rng.gen_range(0..flat.len())];
        states.extend_from_slice(&t.state);
        actions.extend_from_slice(&t.action);
    }
    Ok((
        Tensor::new(n, ds.obs_dim, states)?,
        Tensor::new(n, ds.act_dim, actions)?,
    ))
}
