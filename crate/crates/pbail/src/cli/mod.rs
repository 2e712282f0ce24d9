//! Command-line interface: data generation, labeling, training, evaluation,
//! theory verification, and the experiment matrix.
//!
//! Machine-readable results go to stdout as JSON lines; notices and failure
//! details go to stderr. Exit codes: 0 success, 1 a requested check failed,
//! 2 the command itself could not run.

mod evalcmd;
mod gen;
mod pipeline;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::data::{DataVersion, Pairing};
use crate::error::{Error, Result};

pub use evalcmd::{cmd_eval, cmd_verify, eval_run, EvalOptions, EvalOutcome};
pub use gen::{
    cmd_gen_data, cmd_label, gen_data_cached, load_dataset_manifest, DatasetManifest,
    LabelOutcome, SourcePolicy, CLIPS_FILE, DATA_FILE, DATA_MANIFEST_FILE, PREFS_FILE,
};
pub use pipeline::{
    cmd_matrix, cmd_pipeline, cmd_train, run_cell, CellResult, CellSpec, MatrixConfig,
    PipelineConfig,
};

#[derive(Parser)]
#[command(name = "pbail", version, about = "Preference-based imitation on desk-scale control tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train behavior checkpoints and roll out an offline trajectory dataset
    GenData(GenDataArgs),
    /// Cut one clip per trajectory and label clip pairs by true return
    Label(LabelArgs),
    /// Run one training configuration into a run directory
    Train(TrainArgs),
    /// Re-evaluate a finished run: reproduce stored returns, rank rewards
    Eval(EvalArgs),
    /// Check occupancy identities on random tabular instances
    Verify(VerifyArgs),
    /// Run one full cell: gen-data, label, train, eval
    Pipeline(PipelineArgs),
    /// Run a seeds-by-algorithms grid of pipeline cells
    Matrix(MatrixArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Environment name
    #[arg(long)]
    env: String,
    /// Data quality tier: novice or mixture
    #[arg(long)]
    version: DataVersion,
    #[arg(long)]
    seed: u64,
    /// Directory for data.bin and data_manifest.json
    #[arg(long)]
    out: PathBuf,
    /// Trajectories to roll out, split equally across source policies
    #[arg(long, default_value_t = 50)]
    trajectories: usize,
    /// Behavior-training settings as JSON; defaults to desk scale
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct LabelArgs {
    /// Trajectory container produced by gen-data
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 20)]
    clip_len: usize,
    /// Pairing rule: all or subset:K
    #[arg(long, default_value = "all")]
    pairs: Pairing,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for clips.json and prefs.jsonl
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Run configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory to create
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// Run directory written by train
    #[arg(long)]
    run: PathBuf,
    /// Sampled episodes per checkpoint for the rank-correlation protocol
    #[arg(long, default_value_t = 20)]
    rollouts: usize,
    /// Early checkpoints entering the protocol
    #[arg(long, default_value_t = 10)]
    protocol_checkpoints: usize,
    /// Fraction of training counted as early
    #[arg(long, default_value_t = 0.4)]
    early_fraction: f64,
    /// Also write SVG charts into the run directory
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random tabular instances to generate
    #[arg(long, default_value_t = 1000)]
    instances: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt every check to prove failures are detected
    #[arg(long)]
    selftest_break: bool,
    /// Write the per-check report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PipelineArgs {
    /// Cell configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the configuration
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; data lands in data/, the run in runs/
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct MatrixArgs {
    /// Grid configuration JSON
    #[arg(long)]
    config: PathBuf,
    /// Output root shared by all cells
    #[arg(long)]
    out: PathBuf,
    /// Parallel workers; each cell stays single-threaded
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long)]
    plot: bool,
}

/// Parses arguments, runs the chosen command, and maps errors to exit code 2.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::GenData(a) => {
            cmd_gen_data(&a.env, a.version, a.seed, a.trajectories, a.config.as_deref(), &a.out)
        }
        Command::Label(a) => cmd_label(&a.data, a.clip_len, a.pairs, a.seed, &a.out),
        Command::Train(a) => cmd_train(&a.config, a.seed, &a.out),
        Command::Eval(a) => cmd_eval(
            &a.run,
            &EvalOptions {
                rollouts: a.rollouts,
                protocol_checkpoints: a.protocol_checkpoints,
                early_fraction: a.early_fraction,
                plot: a.plot,
            },
        ),
        Command::Verify(a) => cmd_verify(a.instances, a.seed, a.selftest_break, a.out.as_deref()),
        Command::Pipeline(a) => cmd_pipeline(&a.config, a.seed, &a.out, a.plot),
        Command::Matrix(a) => cmd_matrix(&a.config, &a.out, a.workers, a.plot),
    }
}

/// Strict JSON file load with the path in any error message.
pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

/// Pretty JSON with a trailing newline, the format of all emitted configs.
pub(crate) fn write_json_pretty<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub(crate) fn path_str(path: &Path) -> String {
    path.to_string_lossy().into_owned()
}

/// One machine-readable result line on stdout.
pub(crate) fn emit(value: serde_json::Value) {
    println!("{value}");
}
