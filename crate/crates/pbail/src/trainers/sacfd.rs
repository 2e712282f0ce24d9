//! SAC from demonstrations: the frozen preference-trained reward of the
//! plain baseline, plus behavior-cloning pretraining of the actor and a
//! critic-filtered cloning term on every actor update.

use std::path::Path;

use crate::data::bc_batch;
use crate::error::Result;

use super::driver::{run_loop, BcMode, RewardPhase};
use super::pbrl::{finish_run, pretrain_reward, reward_params_checksum, sac_agent};
use super::{
    derived_rng, load_data, unix_ms, MetricsLog, RewardLossLog, RunArtifacts, RunDir,
    TrainerConfig, BC_STREAM,
};

pub fn train_sacfd(cfg: &TrainerConfig, run_dir: &Path) -> Result<RunArtifacts> {
    let started = unix_ms();
    cfg.validate()?;
    let data = load_data(cfg)?;
    let run = RunDir::create(run_dir, cfg)?;

    let mut reward_log = RewardLossLog::create(&run.reward_losses_path())?;
    let reward = pretrain_reward(cfg, &data, &mut reward_log)?;
    reward_log.finish()?;
    let checksum = reward_params_checksum(&reward);

    let mut agent = sac_agent(cfg, &data)?;
    let mut bc_rng = derived_rng(cfg.seed, BC_STREAM, 0);
    for _ in 0..cfg.bc_pretrain_steps {
        let (states, actions) = bc_batch(&data.ds, cfg.batch_size, &mut bc_rng)?;
        agent.bc_pretrain_step(&states, &actions)?;
    }

    let mut phase = RewardPhase::Frozen(reward);
    let mut metrics = MetricsLog::create(&run.metrics_path())?;
    let out = run_loop(
        cfg,
        &run,
        &data,
        &mut agent,
        &mut phase,
        BcMode::CriticFiltered {
            weight: cfg.bc_weight,
        },
        &mut metrics,
        None,
    )?;
    metrics.finish()?;
    assert_eq!(
        checksum,
        reward_params_checksum(phase.net()),
        "frozen reward moved during the policy phase"
    );

    finish_run(cfg, &run, &data, &phase, out, Some(checksum), started)
}
