//! Training runs, single experiment cells, and the seeds-by-algorithms grid.
//!
//! A cell is the unit of experiment: one (environment, data version,
//! pairing, algorithm, seed) combination, executed as gen-data, label,
//! train, eval, with each stage feeding files to the next. `matrix` runs a
//! whole grid of cells over a worker pool; every cell stays single-threaded
//! so results never depend on scheduling.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::evalcmd::{eval_run, EvalOptions};
use super::gen::{gen_data_cached, label, CLIPS_FILE, DATA_FILE, PREFS_FILE};
use super::{emit, path_str, read_json};
use crate::data::{BehaviorConfig, DataVersion, Pairing};
use crate::error::{Error, Result};
use crate::eval::mean_std;
use crate::trainers::{train, Algo, FinalSummary, TrainerConfig};
use crate::Real;

fn default_rollouts() -> usize {
    20
}

fn default_protocol_checkpoints() -> usize {
    10
}

fn default_early_fraction() -> f64 {
    0.4
}

/// Everything one cell needs besides the algorithm and seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub env: String,
    pub version: DataVersion,
    pub n_trajectories: usize,
    pub clip_len: usize,
    pub pairing: Pairing,
    pub behavior: BehaviorConfig,
    /// Run-settings template; algo, env, seed, the data paths, and the
    /// return anchors are filled in per cell.
    pub trainer: TrainerConfig,
    /// Sampled episodes per checkpoint in the rank-correlation protocol.
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
    #[serde(default = "default_protocol_checkpoints")]
    pub protocol_checkpoints: usize,
    #[serde(default = "default_early_fraction")]
    pub early_fraction: f64,
}

impl CellSpec {
    pub fn validate(&self) -> Result<()> {
        if self.env.is_empty() {
            return Err(Error::Config("cell env must be named".into()));
        }
        let sources = self.version.thresholds().len();
        if self.n_trajectories == 0 || self.n_trajectories % sources != 0 {
            return Err(Error::Config(format!(
                "n_trajectories {} must be positive and divisible by the {} source policies",
                self.n_trajectories, sources
            )));
        }
        if self.clip_len == 0 {
            return Err(Error::Config("clip_len must be positive".into()));
        }
        self.behavior.validate()?;
        if self.rollouts < 2 || self.protocol_checkpoints < 2 {
            return Err(Error::Config(
                "rollouts and protocol_checkpoints must be at least 2".into(),
            ));
        }
        if !(self.early_fraction > 0.0 && self.early_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "early_fraction {} outside (0, 1]",
                self.early_fraction
            )));
        }
        Ok(())
    }

    fn eval_options(&self, plot: bool) -> EvalOptions {
        EvalOptions {
            rollouts: self.rollouts,
            protocol_checkpoints: self.protocol_checkpoints,
            early_fraction: self.early_fraction,
            plot,
        }
    }

    /// Directory name for the cached dataset of one seed.
    fn dataset_dir_name(&self, seed: u64) -> String {
        format!("{}_{}_seed{}", self.env, self.version, seed)
    }
}

/// One-cell experiment description.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub algo: Algo,
    pub seed: u64,
    pub cell: CellSpec,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported pipeline schema version {}",
                self.schema_version
            )));
        }
        self.cell.validate()
    }
}

/// Grid description: every algorithm crossed with every seed on one cell.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub schema_version: u32,
    pub algos: Vec<Algo>,
    pub seeds: Vec<u64>,
    pub cell: CellSpec,
}

impl MatrixConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != 1 {
            return Err(Error::Config(format!(
                "unsupported matrix schema version {}",
                self.schema_version
            )));
        }
        if self.algos.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("matrix needs algos and seeds".into()));
        }
        for (k, a) in self.algos.iter().enumerate() {
            if self.algos[..k].contains(a) {
                return Err(Error::Config(format!("algorithm {a} listed twice")));
            }
        }
        for (k, s) in self.seeds.iter().enumerate() {
            if self.seeds[..k].contains(s) {
                return Err(Error::Config(format!("seed {s} listed twice")));
            }
        }
        self.cell.validate()
    }
}

pub fn cmd_train(config: &Path, seed_override: Option<u64>, out: &Path) -> Result<u8> {
    let mut cfg: TrainerConfig = read_json(config)?;
    if let Some(seed) = seed_override {
        cfg.seed = seed;
    }
    let artifacts = train(&cfg, out)?;
    emit(serde_json::json!({
        "run": artifacts.dir,
        "checkpoints": artifacts.checkpoint_steps.len(),
        "summary": artifacts.summary,
    }));
    Ok(0)
}

fn stage<T>(name: &'static str, result: Result<T>) -> Result<T> {
    result.map_err(|e| Error::Pipeline {
        stage: name,
        source: Box::new(e),
    })
}

/// Everything a finished cell reports upward.
#[derive(Clone, Debug)]
pub struct CellResult {
    pub algo: Algo,
    pub seed: u64,
    pub run_dir: PathBuf,
    pub summary: FinalSummary,
    /// Mean early-checkpoint rank correlation, when the protocol ran.
    pub mean_tau: Option<Real>,
}

/// Runs one cell end to end. The dataset is cached in `data_dir` (reused
/// when its manifest matches); the run directory is recreated from scratch
/// so stale artifacts from earlier configurations cannot leak in.
pub fn run_cell(
    algo: Algo,
    seed: u64,
    cell: &CellSpec,
    data_dir: &Path,
    run_dir: &Path,
    plot: bool,
) -> Result<CellResult> {
    cell.validate()?;
    let (manifest, _cached) = stage(
        "gen-data",
        gen_data_cached(
            &cell.env,
            cell.version,
            seed,
            cell.n_trajectories,
            &cell.behavior,
            data_dir,
        ),
    )?;
    if run_dir.exists() {
        fs::remove_dir_all(run_dir)?;
    }
    stage(
        "label",
        label(
            &data_dir.join(DATA_FILE),
            cell.clip_len,
            cell.pairing,
            seed,
            run_dir,
        ),
    )?;
    let mut cfg = cell.trainer.clone();
    cfg.algo = algo;
    cfg.env = cell.env.clone();
    cfg.seed = seed;
    cfg.data_path = path_str(&data_dir.join(DATA_FILE));
    cfg.clips_path = path_str(&run_dir.join(CLIPS_FILE));
    cfg.prefs_path = path_str(&run_dir.join(PREFS_FILE));
    cfg.random_return = manifest.random_return;
    cfg.expert_return = manifest.expert_return;
    let artifacts = stage("train", train(&cfg, run_dir))?;
    let outcome = stage("eval", eval_run(run_dir, &cell.eval_options(plot)))?;
    if outcome.mismatches != 0 {
        return stage(
            "eval",
            Err(Error::Train(format!(
                "{} of {} stored evaluations did not reproduce",
                outcome.mismatches, outcome.checked
            ))),
        );
    }
    Ok(CellResult {
        algo,
        seed,
        run_dir: run_dir.to_path_buf(),
        summary: artifacts.summary,
        mean_tau: outcome.report.map(|r| r.mean_tau),
    })
}

pub fn cmd_pipeline(config: &Path, seed_override: Option<u64>, out: &Path, plot: bool) -> Result<u8> {
    let mut pc: PipelineConfig = read_json(config)?;
    if let Some(seed) = seed_override {
        pc.seed = seed;
    }
    pc.validate()?;
    let data_dir = out.join("data").join(pc.cell.dataset_dir_name(pc.seed));
    let run_dir = out.join("runs").join(format!("{}_seed{}", pc.algo, pc.seed));
    let result = run_cell(pc.algo, pc.seed, &pc.cell, &data_dir, &run_dir, plot)?;
    emit(serde_json::json!({
        "algo": result.algo.to_string(),
        "seed": result.seed,
        "run": result.run_dir,
        "final_return_normalized": result.summary.final_return_normalized,
        "data_return_normalized": result.summary.data_return_normalized,
        "preference_accuracy": result.summary.preference_accuracy,
        "mean_tau": result.mean_tau,
    }));
    Ok(0)
}

/// Runs `jobs` closures over a fixed-size worker pool, preserving job order
/// in the returned vector. The first error wins; remaining jobs still run.
fn run_pool<T, F>(workers: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<T>>>> = (0..jobs).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, jobs.max(1)) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= jobs {
                    break;
                }
                let result = f(k);
                *slots[k].lock().expect("job slot poisoned") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .expect("job slot poisoned")
                .expect("every job slot filled")
        })
        .collect()
}

fn fmt_mean_std(values: &[Real]) -> String {
    let (mean, std) = mean_std(values);
    format!("{mean:.3} ± {std:.3}")
}

pub fn cmd_matrix(config: &Path, out: &Path, workers: usize, plot: bool) -> Result<u8> {
    let mc: MatrixConfig = read_json(config)?;
    mc.validate()?;

    // Datasets first, one per seed, so cells can share them read-only.
    let data_dirs: Vec<PathBuf> = mc
        .seeds
        .iter()
        .map(|&seed| out.join("data").join(mc.cell.dataset_dir_name(seed)))
        .collect();
    run_pool(workers, mc.seeds.len(), |k| {
        gen_data_cached(
            &mc.cell.env,
            mc.cell.version,
            mc.seeds[k],
            mc.cell.n_trajectories,
            &mc.cell.behavior,
            &data_dirs[k],
        )
    })?;

    let grid: Vec<(Algo, usize)> = mc
        .algos
        .iter()
        .flat_map(|&algo| (0..mc.seeds.len()).map(move |s| (algo, s)))
        .collect();
    let results = run_pool(workers, grid.len(), |k| {
        let (algo, s) = grid[k];
        let seed = mc.seeds[s];
        let run_dir = out.join("runs").join(format!("{algo}_seed{seed}"));
        run_cell(algo, seed, &mc.cell, &data_dirs[s], &run_dir, plot)
    })?;

    let mut cells_csv = String::from(
        "algo,seed,final_return_raw,final_return_normalized,data_return_normalized,\
         preference_accuracy,mean_tau\n",
    );
    for r in &results {
        let tau = r.mean_tau.map(|t| t.to_string()).unwrap_or_default();
        cells_csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.algo,
            r.seed,
            r.summary.final_return_raw,
            r.summary.final_return_normalized,
            r.summary.data_return_normalized,
            r.summary.preference_accuracy,
            tau
        ));
    }
    fs::write(out.join("matrix_cells.csv"), cells_csv)?;

    // One row per task: the data column, then one column per algorithm,
    // each cell mean ± std of normalized return over the seeds.
    let mut header = String::from("env,data");
    for algo in &mc.algos {
        header.push(',');
        header.push_str(&algo.to_string());
    }
    let data_returns: Vec<Real> = mc
        .seeds
        .iter()
        .map(|&seed| {
            results
                .iter()
                .find(|r| r.seed == seed)
                .expect("every seed has results")
                .summary
                .data_return_normalized
        })
        .collect();
    let mut row = format!("{},{}", mc.cell.env, fmt_mean_std(&data_returns));
    for &algo in &mc.algos {
        let finals: Vec<Real> = results
            .iter()
            .filter(|r| r.algo == algo)
            .map(|r| r.summary.final_return_normalized)
            .collect();
        row.push(',');
        row.push_str(&fmt_mean_std(&finals));
    }
    fs::write(out.join("matrix_summary.csv"), format!("{header}\n{row}\n"))?;

    emit(serde_json::json!({
        "cells": results.len(),
        "cells_csv": out.join("matrix_cells.csv"),
        "summary_csv": out.join("matrix_summary.csv"),
    }));
    Ok(0)
}
