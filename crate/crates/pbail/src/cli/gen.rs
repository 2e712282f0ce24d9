//! Dataset generation and labeling commands.
//!
//! `gen-data` trains ground-truth behavior checkpoints up to the tier's
//! performance thresholds, rolls an offline trajectory dataset from them,
//! and records provenance in `data_manifest.json`. `label` cuts one clip
//! per trajectory and labels clip pairs with the true-return oracle,
//! re-verifying every emitted label before writing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{emit, read_json, write_json_pretty};
use crate::data::files::encode_trajectories;
use crate::data::{
    generate_offline_dataset, label_preferences, load_trajectories, sample_clips, save_clips,
    save_preferences, train_behavior_checkpoints, verify_labels, BehaviorConfig, DataVersion,
    Pairing,
};
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::nn::checkpoint::sha256_hex;
use crate::rng::{derived_rng, DATA_STREAM};
use crate::Real;

pub const DATA_FILE: &str = "data.bin";
pub const DATA_MANIFEST_FILE: &str = "data_manifest.json";
pub const CLIPS_FILE: &str = "clips.json";
pub const PREFS_FILE: &str = "prefs.jsonl";

/// Provenance of a generated dataset: the exact request that produced it,
/// the measured return anchors, and a checksum of the trajectory file.
/// Doubles as the cache key for pipeline reuse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub env: String,
    pub version: DataVersion,
    pub seed: u64,
    pub n_trajectories: usize,
    pub behavior: BehaviorConfig,
    pub thresholds: Vec<Real>,
    /// Mean return of a uniform-random policy; zero of the normalized scale.
    pub random_return: Real,
    /// Mean return of the fully trained behavior agent; one of the scale.
    pub expert_return: Real,
    /// Mean true return of the rolled-out trajectories.
    pub data_mean_return: Real,
    pub source_policies: Vec<SourcePolicy>,
    /// Checksum of `data.bin`.
    pub data_sha256: String,
}

/// One accepted behavior checkpoint, as recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcePolicy {
    pub threshold: Real,
    pub step: u64,
    pub raw_return: Real,
    pub normalized_return: Real,
}

impl DatasetManifest {
    /// True when this manifest answers exactly the given generation request.
    pub fn covers(
        &self,
        env: &str,
        version: DataVersion,
        seed: u64,
        n_trajectories: usize,
        behavior: &BehaviorConfig,
    ) -> bool {
        self.schema_version == 1
            && self.env == env
            && self.version == version
            && self.seed == seed
            && self.n_trajectories == n_trajectories
            && &self.behavior == behavior
    }
}

/// Generates a dataset into `out`: `data.bin` plus its manifest.
pub fn gen_data(
    env: &str,
    version: DataVersion,
    seed: u64,
    n_trajectories: usize,
    behavior: &BehaviorConfig,
    out: &Path,
) -> Result<DatasetManifest> {
    behavior.validate()?;
    fs::create_dir_all(out)?;
    let training = train_behavior_checkpoints(env, version.thresholds(), seed, behavior)?;
    let actors: Vec<_> = training.checkpoints.iter().map(|c| c.actor.clone()).collect();
    let mut env_inst = make_env(env)?;
    let mut rng = derived_rng(seed, DATA_STREAM, 0);
    let ds = generate_offline_dataset(env_inst.as_mut(), &actors, n_trajectories, &mut rng)?;
    let bytes = encode_trajectories(&ds)?;
    fs::write(out.join(DATA_FILE), &bytes)?;
    let data_mean_return = ds.trajectories.iter().map(|t| t.true_return).sum::<Real>()
        / ds.trajectories.len() as Real;
    let manifest = DatasetManifest {
        schema_version: 1,
        env: env.to_string(),
        version,
        seed,
        n_trajectories,
        behavior: behavior.clone(),
        thresholds: version.thresholds().to_vec(),
        random_return: training.random_return,
        expert_return: training.final_return,
        data_mean_return,
        source_policies: training
            .checkpoints
            .iter()
            .map(|c| SourcePolicy {
                threshold: c.threshold,
                step: c.step,
                raw_return: c.raw_return,
                normalized_return: c.normalized_return,
            })
            .collect(),
        data_sha256: sha256_hex(&bytes),
    };
    write_json_pretty(&out.join(DATA_MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn load_dataset_manifest(dir: &Path) -> Result<DatasetManifest> {
    read_json(&dir.join(DATA_MANIFEST_FILE))
}

/// Reuses the dataset in `out` when its manifest matches the request and the
/// trajectory file still matches its checksum; regenerates otherwise. The
/// boolean reports whether the cache was hit.
pub fn gen_data_cached(
    env: &str,
    version: DataVersion,
    seed: u64,
    n_trajectories: usize,
    behavior: &BehaviorConfig,
    out: &Path,
) -> Result<(DatasetManifest, bool)> {
    if let Ok(manifest) = load_dataset_manifest(out) {
        if manifest.covers(env, version, seed, n_trajectories, behavior) {
            if let Ok(bytes) = fs::read(out.join(DATA_FILE)) {
                if sha256_hex(&bytes) == manifest.data_sha256 {
                    return Ok((manifest, true));
                }
            }
        }
    }
    gen_data(env, version, seed, n_trajectories, behavior, out).map(|m| (m, false))
}

pub fn cmd_gen_data(
    env: &str,
    version: DataVersion,
    seed: u64,
    trajectories: usize,
    behavior_config: Option<&Path>,
    out: &Path,
) -> Result<u8> {
    let behavior = match behavior_config {
        Some(path) => read_json(path)?,
        None => BehaviorConfig::desk_default(),
    };
    let manifest = gen_data(env, version, seed, trajectories, &behavior, out)?;
    emit(serde_json::json!({
        "dataset": out.join(DATA_FILE),
        "env": manifest.env,
        "version": manifest.version,
        "seed": manifest.seed,
        "n_trajectories": manifest.n_trajectories,
        "random_return": manifest.random_return,
        "expert_return": manifest.expert_return,
        "data_mean_return": manifest.data_mean_return,
    }));
    Ok(0)
}

/// What `label` wrote, plus the self-check tally.
#[derive(Clone, Debug)]
pub struct LabelOutcome {
    pub n_clips: usize,
    pub n_pairs: usize,
}

/// Cuts clips, labels pairs, re-verifies every label against the oracle,
/// and writes `clips.json` and `prefs.jsonl` into `out`.
pub fn label(
    data: &Path,
    clip_len: usize,
    pairs: Pairing,
    seed: u64,
    out: &Path,
) -> Result<LabelOutcome> {
    let ds = load_trajectories(data)?;
    fs::create_dir_all(out)?;
    let mut rng = derived_rng(seed, DATA_STREAM, 1);
    let clips = sample_clips(&ds, clip_len, &mut rng)?;
    let prefs = label_preferences(&ds, &clips, pairs, &mut rng)?;
    let mismatches = verify_labels(&ds, &clips, &prefs)?;
    if mismatches != 0 {
        return Err(Error::Data(format!(
            "labeler self-check found {mismatches} labels disagreeing with the oracle"
        )));
    }
    save_clips(&out.join(CLIPS_FILE), &clips)?;
    save_preferences(&out.join(PREFS_FILE), &prefs)?;
    Ok(LabelOutcome {
        n_clips: clips.len(),
        n_pairs: prefs.len(),
    })
}

pub fn cmd_label(data: &Path, clip_len: usize, pairs: Pairing, seed: u64, out: &Path) -> Result<u8> {
    let outcome = label(data, clip_len, pairs, seed, out)?;
    emit(serde_json::json!({
        "clips": out.join(CLIPS_FILE),
        "preferences": out.join(PREFS_FILE),
        "clip_len": clip_len,
        "pairs": pairs.to_string(),
        "n_clips": outcome.n_clips,
        "n_pairs": outcome.n_pairs,
        "label_mismatches": 0,
    }));
    Ok(0)
}
