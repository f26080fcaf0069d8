//! Experiment runners behind the `bandlab` subcommands.
//!
//! Every runner follows the same shape: consume a flat config, fan samples
//! out deterministically, fold results in index order, and emit a
//! `report.json` manifest plus CSV tables whose bytes depend only on the
//! config and seed — never on the worker count.

pub mod clt;
pub mod decay;
pub mod deloc;
pub mod kloop;
pub mod local_law;
pub mod qdiff;
pub mod que;
pub mod theta;
pub mod universality;
pub mod ward;

use crate::config::{Config, ConfigError};
use crate::report::{OutputDir, Report, WriteError};
use crate::runner::{self, WorkerConfigError};
use bandlab_core::lattice::BlockIndex;
use bandlab_core::loops::Sign;
use std::path::PathBuf;

pub const DEFAULT_SEED: u64 = 2024;

/// Process exit codes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_DEGENERATE: i32 = 2;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_IO: i32 = 74;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Write(#[from] WriteError),
    #[error(transparent)]
    Workers(#[from] WorkerConfigError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Workers(_) => EXIT_CONFIG,
            RunError::Write(_) => EXIT_IO,
        }
    }
}

/// Maps a core-library rejection of a config value onto a config error.
pub fn bad_value(key: &'static str, err: impl std::fmt::Display) -> RunError {
    RunError::Config(ConfigError::BadValue {
        key: key.to_string(),
        msg: err.to_string(),
    })
}

/// Command-line level options merged with config-file values.
pub struct RunOptions {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub reduce: bool,
}

/// Resolved execution context shared by all runners.
pub struct Ctx {
    pub seed: u64,
    pub reduce: bool,
    pub workers: usize,
}

/// What a runner produces: the manifest and named CSV bodies.
pub struct ExpOutput {
    pub report: Report,
    pub files: Vec<(String, String)>,
}

/// Loads the config, dispatches to the named experiment, writes its output
/// directory, and returns the process exit code.
pub fn run_command(command: &str, opts: &RunOptions) -> Result<i32, RunError> {
    runner::init_numerics();
    let workers = runner::worker_count()?;

    let mut cfg = Config::load(&opts.config)?;
    let echo = cfg.echo();
    let (cfg_seed, cfg_out) = cfg.take_common(command)?;
    let seed = opts.seed.or(cfg_seed).unwrap_or(DEFAULT_SEED);
    let out_dir = opts
        .out
        .clone()
        .or_else(|| cfg_out.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(command));
    let ctx = Ctx {
        seed,
        reduce: opts.reduce,
        workers,
    };

    let mut report = Report::new(command, seed, echo);
    let mut output = match command {
        "theta" => theta::run(cfg, &ctx, report)?,
        "kloop" => kloop::run(cfg, &ctx, report)?,
        "ward" => ward::run(cfg, &ctx, report)?,
        "local-law" => local_law::run(cfg, &ctx, report)?,
        "deloc" => deloc::run(cfg, &ctx, report)?,
        "que" => que::run(cfg, &ctx, report)?,
        "qdiff" => qdiff::run(cfg, &ctx, report)?,
        "universality" => universality::run(cfg, &ctx, report)?,
        "decay" => decay::run(cfg, &ctx, report)?,
        "clt" => clt::run(cfg, &ctx, report)?,
        other => {
            report.probes.clear();
            return Err(RunError::Config(ConfigError::Parse(format!(
                "unknown command `{other}`"
            ))));
        }
    };
    output.report.finalize();

    let dir = OutputDir::create(&out_dir)?;
    dir.write("report.json", &output.report.to_json())?;
    for (name, contents) in &output.files {
        dir.write(name, contents)?;
    }

    Ok(if output.report.degenerate {
        EXIT_DEGENERATE
    } else if output.report.pass == Some(true) {
        EXIT_PASS
    } else {
        EXIT_FAIL
    })
}

/// Renders a sign word as `+-…` for CSV cells and probe names.
pub fn sigma_string(sigma: &[Sign]) -> String {
    sigma.iter().map(|s| s.as_char()).collect()
}

/// Renders a block tuple as `c1.c2;c1.c2;…` for CSV cells.
pub fn blocks_string(blocks: &[BlockIndex]) -> String {
    blocks
        .iter()
        .map(|b| format!("{}.{}", b.0, b.1))
        .collect::<Vec<_>>()
        .join(";")
}
