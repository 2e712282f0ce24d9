//! Training regimes over the shared offline preference data.
//!
//! Four algorithms run through one driver loop so that their artifacts,
//! logging, and step ordering are identical:
//!
//! * `pbrl`: pretrains a reward net on the labeled preferences, freezes it,
//!   then runs SAC on relabeled rewards.
//! * `sacfd`: same frozen reward, plus behavior-cloning pretraining of the
//!   actor and a critic-filtered cloning term on every actor update.
//! * `pbail`: learns the reward online. Every environment step takes one
//!   reward minimization step (preference loss plus a virtual-preference
//!   term comparing offline data against replay) and one SAC step. During
//!   the first `k_init` steps the virtual term uses the initialization
//!   objective and the actor also takes plain cloning updates.
//! * `pbail-minus`: the ablation; the virtual term is never
//!   reliability-weighted and no reliability net exists.
//!
//! Each run writes a self-describing directory: `config.json`,
//! `checkpoints/step_N.bin`, `metrics.csv`, `reward_losses.csv`,
//! `final_summary.json` (bitwise reproducible), and `manifest.json` (the
//! only file with timestamps).

pub mod driver;
pub mod pbail;
pub mod pbrl;
pub mod sacfd;

use std::fmt;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::data::{files, Clip, OfflineDataset, PreferenceSample};
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::eval::ReturnScale;
use crate::nn::checkpoint::{encode_nets, sha256_hex};
use crate::reward::RewardNet;
use crate::sac::Batch;
use crate::tensor::Tensor;
use crate::Real;

pub use driver::StepKind;
pub use pbail::train_pbail;
pub use pbrl::{preference_accuracy, pretrain_reward, train_pbrl};
pub use sacfd::train_sacfd;

/// Algorithm selector. Serialized in kebab-case so config files and the
/// command line share spellings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algo {
    Pbrl,
    Sacfd,
    PbailMinus,
    Pbail,
}

impl Algo {
    pub fn learns_reward_online(self) -> bool {
        matches!(self, Algo::Pbail | Algo::PbailMinus)
    }

    pub fn uses_reliability(self) -> bool {
        self == Algo::Pbail
    }

    pub const ALL: [Algo; 4] = [Algo::Pbrl, Algo::Sacfd, Algo::PbailMinus, Algo::Pbail];
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Algo::Pbrl => "pbrl",
            Algo::Sacfd => "sacfd",
            Algo::PbailMinus => "pbail-minus",
            Algo::Pbail => "pbail",
        };
        f.write_str(name)
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pbrl" => Ok(Algo::Pbrl),
            "sacfd" => Ok(Algo::Sacfd),
            "pbail-minus" => Ok(Algo::PbailMinus),
            "pbail" => Ok(Algo::Pbail),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?} (expected pbrl, sacfd, pbail-minus, or pbail)"
            ))),
        }
    }
}

fn default_false() -> bool {
    false
}

/// Complete run description. Everything a run does is a function of this
/// struct and nothing else, so serializing it into the run directory makes
/// the run reproducible.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainerConfig {
    pub schema_version: u32,
    pub algo: Algo,
    pub env: String,
    /// Offline trajectory container.
    pub data_path: String,
    /// Clip windows over the trajectory file.
    pub clips_path: String,
    /// Labeled preference lines over the clips.
    pub prefs_path: String,
    pub seed: u64,
    pub total_steps: u64,
    /// Initialization-phase length for the online reward learners.
    pub k_init: u64,
    /// Environment steps with uniform random actions.
    pub warmup_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub checkpoint_interval: u64,
    /// SAC minibatch size.
    pub batch_size: usize,
    /// Preference pairs per reward step.
    pub pref_batch: usize,
    /// Virtual (offline vs replay) pairs per reward step.
    pub virtual_batch: usize,
    pub replay_capacity: usize,
    /// Hidden widths shared by actor, critics, reward, and reliability nets.
    pub hidden: Vec<usize>,
    pub gamma: Real,
    pub tau: Real,
    /// SAC learning rate.
    pub lr: Real,
    pub init_temperature: Real,
    /// Online reward/reliability learning rate.
    pub reward_lr: Real,
    pub reward_weight_decay: Real,
    pub reliability_weight_decay: Real,
    /// Reward pretraining budget for the frozen-reward algorithms.
    pub reward_pretrain_steps: u64,
    pub reward_pretrain_lr: Real,
    /// Actor cloning pretraining budget (sacfd).
    pub bc_pretrain_steps: u64,
    /// Weight of the critic-filtered cloning term (sacfd).
    pub bc_weight: Real,
    /// Whether the reward-difference feature enters the reliability net
    /// without gradient flow back into the reward parameters.
    pub detach_reliability_feature: bool,
    /// Mean return of a uniform-random policy; anchor of the normalized
    /// return scale.
    pub random_return: Real,
    /// Mean return of a fully trained agent; the other anchor.
    pub expert_return: Real,
    /// Record the env/reward/policy step sequence in the run artifacts.
    #[serde(default = "default_false")]
    pub trace_steps: bool,
}

impl TrainerConfig {
    /// Desk-scale defaults; data paths and return anchors must be filled in
    /// by the caller.
    pub fn desk_default(algo: Algo, env: &str, seed: u64) -> Self {
        Self {
            schema_version: 1,
            algo,
            env: env.to_string(),
            data_path: String::new(),
            clips_path: String::new(),
            prefs_path: String::new(),
            seed,
            total_steps: 50_000,
            k_init: 2_000,
            warmup_steps: 1_000,
            eval_interval: 1_000,
            eval_episodes: 10,
            checkpoint_interval: 2_000,
            batch_size: 256,
            pref_batch: 16,
            virtual_batch: 64,
            replay_capacity: 100_000,
            hidden: vec![64, 64],
            gamma: 0.99,
            tau: 0.005,
            lr: 3e-4,
            init_temperature: 0.1,
            reward_lr: 3e-4,
            reward_weight_decay: 0.0025,
            reliability_weight_decay: 0.0025,
            reward_pretrain_steps: 5_000,
            reward_pretrain_lr: 1e-4,
            bc_pretrain_steps: 2_000,
            bc_weight: 1.0,
            detach_reliability_feature: true,
            random_return: 0.0,
            expert_return: 1.0,
            trace_steps: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported config schema version {}",
                self.schema_version
            )));
        }
        if self.total_steps == 0 {
            return Err(Error::Config("total_steps must be positive".into()));
        }
        if self.k_init >= self.total_steps {
            return Err(Error::Config(format!(
                "k_init {} must be below total_steps {}",
                self.k_init, self.total_steps
            )));
        }
        for (name, interval) in [
            ("eval_interval", self.eval_interval),
            ("checkpoint_interval", self.checkpoint_interval),
        ] {
            if interval == 0 || self.total_steps % interval != 0 {
                return Err(Error::Config(format!(
                    "{name} {interval} must be positive and divide total_steps {}",
                    self.total_steps
                )));
            }
        }
        if self.warmup_steps >= self.total_steps {
            return Err(Error::Config("warmup consumes the whole budget".into()));
        }
        if self.batch_size == 0 || self.pref_batch == 0 || self.virtual_batch == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        if self.replay_capacity < self.batch_size.max(self.virtual_batch) {
            return Err(Error::Config(
                "replay capacity must cover the largest batch".into(),
            ));
        }
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval_episodes must be positive".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::Config("hidden sizes must be positive".into()));
        }
        for (name, v) in [
            ("gamma", self.gamma),
            ("tau", self.tau),
            ("lr", self.lr),
            ("init_temperature", self.init_temperature),
            ("reward_lr", self.reward_lr),
            ("reward_pretrain_lr", self.reward_pretrain_lr),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.gamma < 1.0 && self.tau <= 1.0) {
            return Err(Error::Config("gamma must be < 1 and tau <= 1".into()));
        }
        for (name, v) in [
            ("reward_weight_decay", self.reward_weight_decay),
            ("reliability_weight_decay", self.reliability_weight_decay),
            ("bc_weight", self.bc_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be nonnegative, got {v}"
                )));
            }
        }
        if self.algo.learns_reward_online() {
            if self.k_init == 0 {
                return Err(Error::Config(
                    "online reward learning needs a positive k_init".into(),
                ));
            }
        } else if self.reward_pretrain_steps == 0 {
            return Err(Error::Config(
                "frozen-reward algorithms need reward_pretrain_steps > 0".into(),
            ));
        }
        if self.data_path.is_empty() || self.clips_path.is_empty() || self.prefs_path.is_empty() {
            return Err(Error::Config("data, clips, and prefs paths required".into()));
        }
        if !(self.random_return.is_finite() && self.expert_return.is_finite()) {
            return Err(Error::Config("return anchors must be finite".into()));
        }
        ReturnScale::new(self.random_return, self.expert_return)?;
        Ok(())
    }

    /// Hash of the canonical (compact JSON) encoding.
    pub fn sha256(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }

    pub fn scale(&self) -> ReturnScale {
        ReturnScale::new(self.random_return, self.expert_return).expect("validated")
    }
}

/// Deterministic end-of-run record. Contains no timestamps so that two runs
/// of the same config produce byte-identical files.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FinalSummary {
    pub schema_version: u32,
    pub algo: Algo,
    pub env: String,
    pub seed: u64,
    pub total_steps: u64,
    pub final_return_raw: Real,
    pub final_return_normalized: Real,
    /// Mean true return of the offline trajectories, for data-vs-agent
    /// comparisons.
    pub data_return_raw: Real,
    pub data_return_normalized: Real,
    /// Fraction of non-tied training preferences the final reward net
    /// classifies correctly.
    pub preference_accuracy: Real,
    /// Batch-mean reliability weight at the last reward step, when the
    /// reliability path exists.
    pub mean_alpha_final: Option<Real>,
    /// Checksum of the frozen reward parameters (frozen-reward algorithms).
    pub reward_checksum: Option<String>,
    pub config_sha256: String,
}

/// Everything `train` hands back besides the files on disk.
#[derive(Debug)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub checkpoint_steps: Vec<u64>,
    pub summary: FinalSummary,
    /// Step-kind sequence, populated when `trace_steps` is set.
    pub step_trace: Vec<StepKind>,
}

pub use crate::rng::{
    derived_rng, BC_STREAM, EVAL_STREAM, INIT_STREAM, PRETRAIN_STREAM, PROTOCOL_STREAM,
    TRAIN_STREAM,
};

/// Replaces stored rewards with the learned model's output.
pub fn relabel_batch(batch: &mut Batch, reward: &RewardNet) -> Result<()> {
    let x = batch.states.hcat(&batch.actions)?;
    batch.rewards = reward.eval_x(&x)?;
    Ok(())
}

/// Offline data bundle shared by all trainers.
pub struct LoadedData {
    pub ds: OfflineDataset,
    pub clips: Vec<Clip>,
    pub prefs: Vec<PreferenceSample>,
    /// All offline transitions as (state, action) rows.
    pub offline_x: Tensor<Real>,
    /// (trajectory, step) pairs addressing every offline transition.
    pub flat_index: Vec<(u32, u32)>,
    pub data_mean_return: Real,
}

/// Loads and cross-validates the three data files named by the config.
pub fn load_data(cfg: &TrainerConfig) -> Result<LoadedData> {
    let ds = files::load_trajectories(Path::new(&cfg.data_path))?;
    if ds.env != cfg.env {
        return Err(Error::Config(format!(
            "dataset was generated on {:?} but the config trains on {:?}",
            ds.env, cfg.env
        )));
    }
    let env = make_env(&cfg.env)?;
    if ds.obs_dim != env.obs_dim() || ds.act_dim != env.act_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset dims {}x{} do not match env {}x{}",
            ds.obs_dim,
            ds.act_dim,
            env.obs_dim(),
            env.act_dim()
        )));
    }
    let clips = files::load_clips(Path::new(&cfg.clips_path))?;
    for (k, c) in clips.iter().enumerate() {
        let n = ds
            .trajectories
            .get(c.traj)
            .map(|t| t.transitions.len())
            .ok_or_else(|| Error::Data(format!("clip {k} references trajectory {}", c.traj)))?;
        if c.len == 0 || c.start + c.len > n {
            return Err(Error::Data(format!(
                "clip {k} window {}..{} escapes its trajectory ({} steps)",
                c.start,
                c.start + c.len,
                n
            )));
        }
    }
    let prefs = files::load_preferences(Path::new(&cfg.prefs_path))?;
    if prefs.is_empty() {
        return Err(Error::Data("preference file is empty".into()));
    }
    for (k, p) in prefs.iter().enumerate() {
        if p.a >= clips.len() || p.b >= clips.len() || p.a == p.b {
            return Err(Error::Data(format!(
                "preference {k} does not reference two distinct clips"
            )));
        }
    }
    let offline_x = crate::data::transition_x_matrix(&ds);
    let mut flat_index = Vec::with_capacity(ds.n_transitions());
    for (ti, t) in ds.trajectories.iter().enumerate() {
        for si in 0..t.transitions.len() {
            flat_index.push((ti as u32, si as u32));
        }
    }
    let data_mean_return = ds.trajectories.iter().map(|t| t.true_return).sum::<Real>()
        / ds.trajectories.len() as Real;
    Ok(LoadedData {
        ds,
        clips,
        prefs,
        offline_x,
        flat_index,
        data_mean_return,
    })
}

/// Run-directory handle; creates the layout and owns file naming.
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    /// Creates the directory (parents included), writes `config.json`, and
    /// prepares `checkpoints/`.
    pub fn create(root: &Path, cfg: &TrainerConfig) -> Result<Self> {
        fs::create_dir_all(root.join("checkpoints"))?;
        let mut config_json = serde_json::to_string_pretty(cfg)?;
        config_json.push('\n');
        fs::write(root.join("config.json"), config_json)?;
        Ok(Self {
            root: root.to_path_buf(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoint_path(&self, step: u64) -> PathBuf {
        self.root.join("checkpoints").join(format!("step_{step}.bin"))
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn reward_losses_path(&self) -> PathBuf {
        self.root.join("reward_losses.csv")
    }

    pub fn summary_path(&self) -> PathBuf {
        self.root.join("final_summary.json")
    }

    pub fn write_summary(&self, summary: &FinalSummary) -> Result<()> {
        let mut text = serde_json::to_string_pretty(summary)?;
        text.push('\n');
        fs::write(self.summary_path(), text)?;
        Ok(())
    }

    pub fn write_step_trace(&self, trace: &[StepKind]) -> Result<()> {
        let mut out = String::with_capacity(trace.len() * 2);
        for kind in trace {
            out.push(match kind {
                StepKind::Env => 'E',
                StepKind::Reward => 'R',
                StepKind::Policy => 'P',
            });
        }
        out.push('\n');
        fs::write(self.root.join("step_trace.txt"), out)?;
        Ok(())
    }

    /// Wall-clock bookkeeping lives here and only here. Written atomically
    /// (temp file plus rename), so a manifest on disk always describes a
    /// finished run.
    pub fn write_manifest(&self, cfg: &TrainerConfig, started_ms: u128) -> Result<()> {
        let finished_ms = unix_ms();
        let mut artifacts: Vec<String> = ["config.json", "metrics.csv", "reward_losses.csv",
            "final_summary.json", "step_trace.txt"]
            .iter()
            .filter(|name| self.root.join(name).exists())
            .map(|name| name.to_string())
            .collect();
        let mut checkpoints: Vec<_> = fs::read_dir(self.root.join("checkpoints"))?
            .filter_map(|e| e.ok())
            .filter_map(|e| e.file_name().into_string().ok())
            .collect();
        checkpoints.sort();
        artifacts.extend(checkpoints.into_iter().map(|n| format!("checkpoints/{n}")));
        let manifest = serde_json::json!({
            "config_sha256": cfg.sha256(),
            "seed": cfg.seed,
            "code_version": env!("CARGO_PKG_VERSION"),
            "started_unix_ms": started_ms as u64,
            "finished_unix_ms": finished_ms as u64,
            "artifacts": artifacts,
        });
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        let tmp = self.root.join("manifest.json.tmp");
        fs::write(&tmp, text)?;
        fs::rename(&tmp, self.root.join("manifest.json"))?;
        Ok(())
    }
}

pub(crate) fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Formats an optional metric for CSV: absent values become empty cells.
fn cell(v: Option<Real>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Interval-mean accumulator for one CSV column.
#[derive(Default)]
pub struct MeanCell {
    sum: Real,
    n: u64,
}

impl MeanCell {
    pub fn push(&mut self, v: Real) {
        self.sum += v;
        self.n += 1;
    }

    pub fn take(&mut self) -> Option<Real> {
        let out = (self.n > 0).then(|| self.sum / self.n as Real);
        self.sum = 0.0;
        self.n = 0;
        out
    }
}

/// `metrics.csv` writer: one row per evaluation point carrying the eval
/// return plus interval means of the training losses.
pub struct MetricsLog {
    file: BufWriter<fs::File>,
    pub critic_loss: MeanCell,
    pub actor_loss: MeanCell,
    pub temperature: MeanCell,
    pub loss_pref: MeanCell,
    pub loss_virtual: MeanCell,
    pub mean_alpha: MeanCell,
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = BufWriter::new(fs::File::create(path)?);
        writeln!(
            file,
            "step,eval_return,eval_return_normalized,critic_loss,actor_loss,temperature,\
             loss_pref,loss_virtual,mean_alpha"
        )?;
        Ok(Self {
            file,
            critic_loss: MeanCell::default(),
            actor_loss: MeanCell::default(),
            temperature: MeanCell::default(),
            loss_pref: MeanCell::default(),
            loss_virtual: MeanCell::default(),
            mean_alpha: MeanCell::default(),
        })
    }

    pub fn eval_row(&mut self, step: u64, eval_raw: Real, eval_norm: Real) -> Result<()> {
        let row = format!(
            "{},{},{},{},{},{},{},{},{}",
            step,
            eval_raw,
            eval_norm,
            cell(self.critic_loss.take()),
            cell(self.actor_loss.take()),
            cell(self.temperature.take()),
            cell(self.loss_pref.take()),
            cell(self.loss_virtual.take()),
            cell(self.mean_alpha.take()),
        );
        writeln!(self.file, "{row}")?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }
}

/// Per-step reward-learning CSV: `step,loss_pref,loss_virtual,mean_alpha`.
/// Pretraining phases log their own step counter; online learners log the
/// environment step.
pub struct RewardLossLog {
    file: BufWriter<fs::File>,
}

impl RewardLossLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = BufWriter::new(fs::File::create(path)?);
        writeln!(file, "step,loss_pref,loss_virtual,mean_alpha")?;
        Ok(Self { file })
    }

    pub fn row(
        &mut self,
        step: u64,
        loss_pref: Option<Real>,
        loss_virtual: Option<Real>,
        mean_alpha: Option<Real>,
    ) -> Result<()> {
        writeln!(
            self.file,
            "{},{},{},{}",
            step,
            cell(loss_pref),
            cell(loss_virtual),
            cell(mean_alpha)
        )?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }
}

/// Saves one checkpoint file and returns its byte encoding's checksum.
pub(crate) fn save_checkpoint(
    path: &Path,
    actor: &crate::nn::Mlp<Real>,
    q1: &crate::nn::Mlp<Real>,
    q2: &crate::nn::Mlp<Real>,
    reward: &RewardNet,
    reliability: Option<&crate::reward::ReliabilityNet>,
) -> Result<String> {
    let mut nets: Vec<(&str, &crate::nn::Mlp<Real>)> = vec![
        ("actor", actor),
        ("q1", q1),
        ("q2", q2),
        ("reward", reward.mlp()),
    ];
    if let Some(rel) = reliability {
        nets.push(("reliability", rel.mlp()));
    }
    let bytes = encode_nets(&nets);
    fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

/// Runs the configured algorithm, writing artifacts under `run_dir`.
pub fn train(cfg: &TrainerConfig, run_dir: &Path) -> Result<RunArtifacts> {
    cfg.validate()?;
    match cfg.algo {
        Algo::Pbrl => pbrl::train_pbrl(cfg, run_dir),
        Algo::Sacfd => sacfd::train_sacfd(cfg, run_dir),
        Algo::Pbail | Algo::PbailMinus => pbail::train_pbail(cfg, run_dir),
    }
}
