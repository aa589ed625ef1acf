use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use levy_euler_cli::{execute, Command, RunOptions};

#[derive(Parser)]
#[command(
    name = "levy-euler",
    version,
    about = "Weak Euler schemes for Lévy-driven SDEs"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the config's output directory.
    #[arg(long, global = true)]
    outdir: Option<PathBuf>,
    /// Replaces the config's root seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for path loops (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replaces the config's path count.
    #[arg(long, global = true)]
    paths: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Sub {
    /// Terminal values of every path.
    Simulate,
    /// Weak errors and fitted convergence order.
    Rate,
    /// Time-discretization and substitution error surface.
    Decompose,
    /// Step statistics of jump-adapted partitions.
    Adapted,
    /// Closed-form, factorization, generator and martingale checks.
    Check,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    let command = match cli.command {
        Sub::Simulate => Command::Simulate,
        Sub::Rate => Command::Rate,
        Sub::Decompose => Command::Decompose,
        Sub::Adapted => Command::Adapted,
        Sub::Check => Command::Check,
    };
    let opts = RunOptions {
        outdir: cli.outdir,
        seed: cli.seed,
        paths: cli.paths,
    };
    let outcome = execute(command, &config, &opts);
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(m) = &outcome.message {
        eprintln!("error: {m}");
    }
    if let Some(dir) = &outcome.dir {
        println!("{} {:?}: {}", command.name(), outcome.status, dir.display());
    }
    ExitCode::from(outcome.status.exit_code())
}
