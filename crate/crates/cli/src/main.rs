mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use commands::{Command, Failure};
use config::{Config, Overrides};
use output::Manifest;

/// Localization landscape experiments.
#[derive(Parser, Debug)]
#[command(name = "anderson", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration.
    #[arg(long, env = "ANDERSON_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "ANDERSON_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "ANDERSON_TRIALS")]
    trials: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, env = "ANDERSON_THREADS")]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, env = "ANDERSON_OUT")]
    out: Option<PathBuf>,
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let overrides = Overrides {
        seed: cli.seed,
        trials: cli.trials,
        threads: cli.threads,
        out: cli.out.clone(),
    };
    let cfg = Config::load(cli.config.as_deref(), &overrides)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| Failure::Config(format!("cannot start {} threads: {e}", cfg.threads)))?;
    }
    let artifacts = commands::run(cli.command, &cfg)?;
    let manifest = Manifest {
        command: cli.command.name(),
        config_sha256: cfg.hash(),
        seed: cfg.seed,
        trials: cfg.trials,
        threads: rayon::current_num_threads(),
        anderson_cli: env!("CARGO_PKG_VERSION").into(),
        anderson_core: anderson_core::VERSION.into(),
        created_unix: Manifest::created_now(),
        files: artifacts.names(),
        config: cfg.to_toml().parse().expect("resolved config is valid TOML"),
    };
    artifacts
        .commit(&cfg.out, &manifest)
        .map_err(|e| Failure::Io(format!("{}: {e}", cfg.out.display())))?;
    for name in artifacts.names() {
        println!("{}", cfg.out.join(name).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("anderson: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
