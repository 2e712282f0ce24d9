//! Online adversarial reward learning. The reward net trains during
//! interaction: each environment step takes one reward step (preference
//! loss plus a virtual term comparing offline data against fresh replay)
//! followed by one SAC step on the current reward. With the reliability
//! head enabled, the virtual term is reliability-weighted after the
//! initialization phase; the ablation drops the head and keeps the
//! unweighted virtual loss throughout. During the first `k_init` steps the
//! actor also takes plain cloning updates on the offline data.

use std::path::Path;

use crate::error::Result;
use crate::nn::Adam;
use crate::reward::{ReliabilityNet, RewardNet};

use super::driver::{run_loop, BcMode, OnlineReward, RewardPhase};
use super::pbrl::{finish_run, sac_agent};
use super::{
    derived_rng, load_data, unix_ms, MetricsLog, RewardLossLog, RunArtifacts, RunDir,
    TrainerConfig, INIT_STREAM,
};

pub fn train_pbail(cfg: &TrainerConfig, run_dir: &Path) -> Result<RunArtifacts> {
    let started = unix_ms();
    cfg.validate()?;
    let data = load_data(cfg)?;
    let run = RunDir::create(run_dir, cfg)?;

    // Stream offset 1 keeps the reward/reliability draws disjoint from the
    // SAC initialization in `sac_agent`.
    let mut init_rng = derived_rng(cfg.seed, INIT_STREAM, 1);
    let reward = RewardNet::new(data.ds.obs_dim, data.ds.act_dim, &cfg.hidden, &mut init_rng)?;
    let reward_opt = Adam::for_mlp(cfg.reward_lr, cfg.reward_weight_decay, reward.mlp());
    let reliability = if cfg.algo.uses_reliability() {
        let net = ReliabilityNet::new(&cfg.hidden, &mut init_rng)?;
        let opt = Adam::for_mlp(cfg.reward_lr, cfg.reliability_weight_decay, net.mlp());
        Some((net, opt))
    } else {
        None
    };
    let mut agent = sac_agent(cfg, &data)?;

    let mut phase = RewardPhase::Online(OnlineReward {
        net: reward,
        opt: reward_opt,
        reliability,
        detach_feature: cfg.detach_reliability_feature,
        k_init: cfg.k_init,
    });
    let reward_log = RewardLossLog::create(&run.reward_losses_path())?;
    let mut metrics = MetricsLog::create(&run.metrics_path())?;
    let out = run_loop(
        cfg,
        &run,
        &data,
        &mut agent,
        &mut phase,
        BcMode::InitCloning { k_init: cfg.k_init },
        &mut metrics,
        Some(reward_log),
    )?;
    metrics.finish()?;

    finish_run(cfg, &run, &data, &phase, out, None, started)
}
