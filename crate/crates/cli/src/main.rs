use bandlab_cli::experiments::{run_command, RunOptions};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

/// Numerical laboratory for 2D block band matrices.
#[derive(Parser)]
#[command(name = "bandlab", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Flat TOML config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master RNG seed (overrides the config's `seed`).
    #[arg(long)]
    seed: Option<u64>,
    /// Emit translation-reduced tables where the experiment supports it.
    #[arg(long)]
    reduce: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Block-propagator kernel diagnostics.
    Theta(RunArgs),
    /// Deterministic loop hierarchy under the characteristic flow.
    Kloop(RunArgs),
    /// Resolvent summation identities on sampled matrices.
    Ward(RunArgs),
    /// Entrywise and block-trace resolvent concentration.
    #[command(name = "local-law")]
    LocalLaw(RunArgs),
    /// Sup-norm delocalization of bulk eigenvectors.
    Deloc(RunArgs),
    /// Eigenvector equidistribution over blocks.
    Que(RunArgs),
    /// Two-leg loop means against the diffusion profile.
    Qdiff(RunArgs),
    /// Gap-ratio statistics across ensembles.
    Universality(RunArgs),
    /// Distance profile of loop fluctuations.
    Decay(RunArgs),
    /// Spatial correlation of block-trace fluctuations.
    Clt(RunArgs),
}

fn split(cmd: Cmd) -> (&'static str, RunArgs) {
    match cmd {
        Cmd::Theta(a) => ("theta", a),
        Cmd::Kloop(a) => ("kloop", a),
        Cmd::Ward(a) => ("ward", a),
        Cmd::LocalLaw(a) => ("local-law", a),
        Cmd::Deloc(a) => ("deloc", a),
        Cmd::Que(a) => ("que", a),
        Cmd::Qdiff(a) => ("qdiff", a),
        Cmd::Universality(a) => ("universality", a),
        Cmd::Decay(a) => ("decay", a),
        Cmd::Clt(a) => ("clt", a),
    }
}

fn main() {
    let cli = Cli::parse();
    let (name, args) = split(cli.cmd);
    let opts = RunOptions {
        config: args.config,
        out: args.out,
        seed: args.seed,
        reduce: args.reduce,
    };
    let code = match run_command(name, &opts) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("bandlab {name}: {err}");
            err.exit_code()
        }
    };
    std::process::exit(code);
}
