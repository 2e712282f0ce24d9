//! Run-directory re-evaluation and the randomized theory verifier.
//!
//! `eval` proves a run directory is self-describing: it reloads stored
//! checkpoints, replays the evaluation rollouts with the same derived
//! generators, and compares against `metrics.csv` character for character.
//! It then runs the reward-quality protocol over early checkpoints and
//! writes `rank_correlation.{csv,json}`. `verify` drives the tabular
//! occupancy suite and reports one JSON line per check.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{emit, read_json, write_json_pretty};
use crate::envs::make_env;
use crate::error::{Error, Result};
use crate::eval::{
    generalizability_report, policy_mean_return, select_protocol_checkpoints,
    RankCorrelationReport,
};
use crate::nn::checkpoint::load_nets;
use crate::nn::Mlp;
use crate::occupancy::run_theory_suite;
use crate::plot::{line_chart, Series};
use crate::reward::RewardNet;
use crate::rng::{derived_rng, EVAL_STREAM};
use crate::trainers::TrainerConfig;
use crate::Real;

pub struct EvalOptions {
    pub rollouts: usize,
    pub protocol_checkpoints: usize,
    /// Fraction of training whose checkpoints count as early.
    pub early_fraction: f64,
    pub plot: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            rollouts: 20,
            protocol_checkpoints: 10,
            early_fraction: 0.4,
            plot: false,
        }
    }
}

pub struct EvalOutcome {
    /// Stored evaluation rows that were replayed.
    pub checked: usize,
    /// Replayed rows that failed to reproduce the stored text.
    pub mismatches: usize,
    /// Early-checkpoint rank correlations, when enough checkpoints exist.
    pub report: Option<RankCorrelationReport>,
}

/// Sorted checkpoint steps found under `run/checkpoints`.
fn list_checkpoint_steps(run: &Path) -> Result<Vec<u64>> {
    let dir = run.join("checkpoints");
    let mut steps = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(step) = name
            .strip_prefix("step_")
            .and_then(|s| s.strip_suffix(".bin"))
            .and_then(|s| s.parse::<u64>().ok())
        {
            steps.push(step);
        }
    }
    steps.sort_unstable();
    if steps.is_empty() {
        return Err(Error::Config(format!("no checkpoints in {}", dir.display())));
    }
    Ok(steps)
}

/// Named networks from one checkpoint file.
fn load_net_map(path: &Path) -> Result<HashMap<String, Mlp<Real>>> {
    Ok(load_nets(path)?.into_iter().collect())
}

/// Stored metrics rows keyed by step: (eval_return, eval_return_normalized)
/// exactly as written, plus the parsed numeric pairs for plotting.
struct StoredMetrics {
    cells: HashMap<u64, (String, String)>,
    curve: Vec<(Real, Real)>,
}

fn read_metrics(run: &Path) -> Result<StoredMetrics> {
    let path = run.join("metrics.csv");
    let text =
        fs::read_to_string(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Format("metrics.csv is empty".into()))?
        .split(',')
        .collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|&h| h == name)
            .ok_or_else(|| Error::Format(format!("metrics.csv lacks column {name}")))
    };
    let (step_col, raw_col, norm_col) = (
        col("step")?,
        col("eval_return")?,
        col("eval_return_normalized")?,
    );
    let mut cells = HashMap::new();
    let mut curve = Vec::new();
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header.len() {
            return Err(Error::Format(format!(
                "metrics.csv row {} has {} fields, header has {}",
                k + 2,
                fields.len(),
                header.len()
            )));
        }
        let step: u64 = fields[step_col]
            .parse()
            .map_err(|_| Error::Format(format!("metrics.csv row {} has a bad step", k + 2)))?;
        cells.insert(
            step,
            (fields[raw_col].to_string(), fields[norm_col].to_string()),
        );
        let norm: Real = fields[norm_col]
            .parse()
            .map_err(|_| Error::Format(format!("metrics.csv row {} has a bad return", k + 2)))?;
        curve.push((step as Real, norm));
    }
    Ok(StoredMetrics { cells, curve })
}

/// Replays evaluations and runs the rank-correlation protocol on a finished
/// run directory. Writes `rank_correlation.csv` and `.json` (and SVG charts
/// with `plot`) next to the run's other artifacts.
pub fn eval_run(run: &Path, opts: &EvalOptions) -> Result<EvalOutcome> {
    let cfg: TrainerConfig = read_json(&run.join("config.json"))?;
    cfg.validate()?;
    let steps = list_checkpoint_steps(run)?;
    let stored = read_metrics(run)?;
    let scale = cfg.scale();
    let mut env = make_env(&cfg.env)?;
    let (obs_dim, act_dim) = (env.obs_dim(), env.act_dim());

    let mut checked = 0usize;
    let mut mismatches = 0usize;
    for &step in &steps {
        let Some((stored_raw, stored_norm)) = stored.cells.get(&step) else {
            continue;
        };
        let mut nets = load_net_map(&run.join("checkpoints").join(format!("step_{step}.bin")))?;
        let actor = nets
            .remove("actor")
            .ok_or_else(|| Error::Format(format!("checkpoint {step} has no actor net")))?;
        let mut rng = derived_rng(cfg.seed, EVAL_STREAM, step);
        let raw = policy_mean_return(env.as_mut(), &actor, cfg.eval_episodes, false, &mut rng)?;
        let norm = scale.normalize(raw);
        let ok = format!("{raw}") == *stored_raw && format!("{norm}") == *stored_norm;
        checked += 1;
        if !ok {
            mismatches += 1;
        }
        emit(serde_json::json!({
            "check": "eval_return",
            "step": step,
            "stored": stored_raw,
            "recomputed": format!("{raw}"),
            "match": ok,
        }));
    }

    let report = match select_protocol_checkpoints(
        &steps,
        cfg.total_steps,
        opts.early_fraction,
        opts.protocol_checkpoints,
    ) {
        Err(e) => {
            eprintln!("notice: rank-correlation protocol skipped: {e}");
            None
        }
        Ok(chosen) => {
            let mut triples = Vec::with_capacity(chosen.len());
            for &step in &chosen {
                let mut nets =
                    load_net_map(&run.join("checkpoints").join(format!("step_{step}.bin")))?;
                let actor = nets
                    .remove("actor")
                    .ok_or_else(|| Error::Format(format!("checkpoint {step} has no actor net")))?;
                match nets.remove("reward") {
                    Some(mlp) => {
                        triples.push((step, actor, RewardNet::from_mlp(mlp, obs_dim, act_dim)?))
                    }
                    None => eprintln!(
                        "notice: checkpoint {step} has no reward net; skipped in the protocol"
                    ),
                }
            }
            if triples.len() < 2 {
                eprintln!("notice: rank-correlation protocol skipped: fewer than two checkpoints carry a reward net");
                None
            } else {
                Some(generalizability_report(&cfg.env, cfg.seed, &triples, opts.rollouts)?)
            }
        }
    };

    if let Some(report) = &report {
        let mut csv = String::from("checkpoint_step,tau\n");
        for e in &report.entries {
            csv.push_str(&format!("{},{}\n", e.step, e.tau));
        }
        fs::write(run.join("rank_correlation.csv"), csv)?;
        write_json_pretty(&run.join("rank_correlation.json"), report)?;
        emit(serde_json::json!({
            "check": "rank_correlation",
            "checkpoints": report.entries.len(),
            "rollouts": opts.rollouts,
            "mean_tau": report.mean_tau,
        }));
        if opts.plot {
            let points: Vec<(Real, Real)> = report
                .entries
                .iter()
                .map(|e| (e.step as Real, e.tau))
                .collect();
            let svg = line_chart(
                "Learned-return rank correlation",
                "checkpoint step",
                "tau",
                &[Series { label: "tau", points: &points }],
            )?;
            fs::write(run.join("rank_correlation.svg"), svg)?;
        }
    }
    if opts.plot && !stored.curve.is_empty() {
        let svg = line_chart(
            "Evaluation return",
            "environment step",
            "normalized return",
            &[Series { label: "return", points: &stored.curve }],
        )?;
        fs::write(run.join("learning_curve.svg"), svg)?;
    }

    emit(serde_json::json!({
        "run": run,
        "checked": checked,
        "mismatches": mismatches,
    }));
    Ok(EvalOutcome {
        checked,
        mismatches,
        report,
    })
}

pub fn cmd_eval(run: &Path, opts: &EvalOptions) -> Result<u8> {
    let outcome = eval_run(run, opts)?;
    Ok(if outcome.mismatches == 0 { 0 } else { 1 })
}

/// Runs the tabular occupancy suite: one JSON line per check (to `out` when
/// given, stdout otherwise), a summary line, failing seeds to stderr.
pub fn cmd_verify(instances: u64, seed: u64, selftest_break: bool, out: Option<&Path>) -> Result<u8> {
    let records = run_theory_suite(instances, seed, 20, 4, selftest_break);
    let mut lines = String::with_capacity(records.len() * 120);
    for r in &records {
        lines.push_str(&serde_json::to_string(r)?);
        lines.push('\n');
    }
    match out {
        Some(path) => fs::write(path, &lines)?,
        None => print!("{lines}"),
    }
    let failures: Vec<_> = records.iter().filter(|r| !r.pass).collect();
    emit(serde_json::json!({
        "instances": instances,
        "checks": records.len(),
        "failures": failures.len(),
    }));
    for r in failures.iter().take(10) {
        eprintln!(
            "FAIL {} instance {} seed {} lhs {} rhs {} gap {}",
            r.check, r.instance, r.seed, r.lhs, r.rhs, r.gap
        );
    }
    if failures.len() > 10 {
        eprintln!("... and {} more failures", failures.len() - 10);
    }
    Ok(if failures.is_empty() { 0 } else { 1 })
}
