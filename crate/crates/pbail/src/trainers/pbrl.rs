//! Preference-based reward learning baseline: fit the reward net to the
//! labeled preferences, freeze it, then train SAC on its relabeled rewards.

use std::path::Path;

use rand::Rng;

use crate::data::build_clip_batch;
use crate::error::Result;
use crate::nn::checkpoint::{encode_nets, sha256_hex};
use crate::nn::{Adam, Tape};
use crate::reward::{preference_loss, RewardNet};
use crate::sac::{SacAgent, SacConfig};
use crate::Real;

use super::driver::{run_loop, BcMode, RewardPhase};
use super::{
    derived_rng, load_data, unix_ms, FinalSummary, LoadedData, MetricsLog, RewardLossLog,
    RunArtifacts, RunDir, TrainerConfig, INIT_STREAM, PRETRAIN_STREAM,
};

/// Fits a fresh reward net to the labeled preferences by minibatch descent
/// on the Bradley-Terry loss. Logs one row per pretraining step.
pub fn pretrain_reward(
    cfg: &TrainerConfig,
    data: &LoadedData,
    log: &mut RewardLossLog,
) -> Result<RewardNet> {
    let mut rng = derived_rng(cfg.seed, PRETRAIN_STREAM, 0);
    let mut net = RewardNet::new(data.ds.obs_dim, data.ds.act_dim, &cfg.hidden, &mut rng)?;
    let mut opt = Adam::for_mlp(cfg.reward_pretrain_lr, cfg.reward_weight_decay, net.mlp());
    for step in 1..=cfg.reward_pretrain_steps {
        let chosen: Vec<usize> = (0..cfg.pref_batch)
            .map(|_| rng.gen_range(0..data.prefs.len()))
            .collect();
        let batch = build_clip_batch(&data.ds, &data.clips, &data.prefs, &chosen)?;
        let mut tape = Tape::new();
        let treward = net.register(&mut tape);
        let loss = preference_loss(&mut tape, &treward, &batch)?;
        let loss_val = tape.value(loss).item()?;
        let mut grads = tape.backward(loss)?;
        let gr = treward.grads(&mut grads, net.mlp());
        opt.step_mlp(net.mlp_mut(), &gr)?;
        net.power_iterate();
        log.row(step, Some(loss_val), None, None)?;
    }
    Ok(net)
}

/// Fraction of non-tied training preferences whose clip utilities the net
/// orders correctly (prediction thresholded at probability one half).
pub fn preference_accuracy(net: &RewardNet, data: &LoadedData) -> Result<Real> {
    let mut correct = 0usize;
    let mut total = 0usize;
    let indices: Vec<usize> = (0..data.prefs.len()).collect();
    let batch = build_clip_batch(&data.ds, &data.clips, &data.prefs, &indices)?;
    let r1 = net.eval_x(&batch.x1)?;
    let r2 = net.eval_x(&batch.x2)?;
    let sums = |r: &crate::tensor::Tensor<Real>, bounds: &[usize]| -> Vec<Real> {
        bounds
            .windows(2)
            .map(|w| (w[0]..w[1]).map(|i| r.get(i, 0)).sum())
            .collect()
    };
    let g1 = sums(&r1, &batch.bounds1);
    let g2 = sums(&r2, &batch.bounds2);
    for (k, p) in data.prefs.iter().enumerate() {
        if p.c == 0.5 {
            continue;
        }
        total += 1;
        let predicted_first = g1[k] > g2[k];
        if predicted_first == (p.c == 1.0) {
            correct += 1;
        }
    }
    if total == 0 {
        return Err(crate::error::Error::Data(
            "preference accuracy undefined: all labels are ties".into(),
        ));
    }
    Ok(correct as Real / total as Real)
}

pub(super) fn sac_config(cfg: &TrainerConfig, obs_dim: usize, act_dim: usize) -> SacConfig {
    let mut sc = SacConfig::new(obs_dim, act_dim);
    sc.hidden = cfg.hidden.clone();
    sc.gamma = cfg.gamma;
    sc.tau = cfg.tau;
    sc.lr = cfg.lr;
    sc.init_temperature = cfg.init_temperature;
    sc
}

pub(super) fn reward_params_checksum(net: &RewardNet) -> String {
    sha256_hex(&encode_nets(&[("reward", net.mlp())]))
}

pub fn train_pbrl(cfg: &TrainerConfig, run_dir: &Path) -> Result<RunArtifacts> {
    let started = unix_ms();
    cfg.validate()?;
    let data = load_data(cfg)?;
    let run = RunDir::create(run_dir, cfg)?;

    let mut reward_log = RewardLossLog::create(&run.reward_losses_path())?;
    let reward = pretrain_reward(cfg, &data, &mut reward_log)?;
    reward_log.finish()?;
    let checksum = reward_params_checksum(&reward);

    let mut agent = sac_agent(cfg, &data)?;
    let mut phase = RewardPhase::Frozen(reward);
    let mut metrics = MetricsLog::create(&run.metrics_path())?;
    let out = run_loop(
        cfg,
        &run,
        &data,
        &mut agent,
        &mut phase,
        BcMode::Off,
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

pub(super) fn sac_agent(cfg: &TrainerConfig, data: &LoadedData) -> Result<SacAgent> {
    let mut rng = derived_rng(cfg.seed, INIT_STREAM, 0);
    SacAgent::new(sac_config(cfg, data.ds.obs_dim, data.ds.act_dim), &mut rng)
}

/// Shared run epilogue: summary, optional step trace, manifest.
pub(super) fn finish_run(
    cfg: &TrainerConfig,
    run: &RunDir,
    data: &LoadedData,
    phase: &RewardPhase,
    out: super::driver::LoopOutput,
    reward_checksum: Option<String>,
    started: u128,
) -> Result<RunArtifacts> {
    let scale = cfg.scale();
    let summary = FinalSummary {
        schema_version: 1,
        algo: cfg.algo,
        env: cfg.env.clone(),
        seed: cfg.seed,
        total_steps: cfg.total_steps,
        final_return_raw: out.final_return_raw,
        final_return_normalized: scale.normalize(out.final_return_raw),
        data_return_raw: data.data_mean_return,
        data_return_normalized: scale.normalize(data.data_mean_return),
        preference_accuracy: preference_accuracy(phase.net(), data)?,
        mean_alpha_final: out.mean_alpha_final,
        reward_checksum,
        config_sha256: cfg.sha256(),
    };
    run.write_summary(&summary)?;
    if cfg.trace_steps {
        run.write_step_trace(&out.step_trace)?;
    }
    run.write_manifest(cfg, started)?;
    Ok(RunArtifacts {
        dir: run.root().to_path_buf(),
        checkpoint_steps: out.checkpoint_steps,
        summary,
        step_trace: if cfg.trace_steps { out.step_trace } else { Vec::new() },
    })
}
