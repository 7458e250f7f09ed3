#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use run::{Failure, Outcome};

#[derive(Parser)]
#[command(
    name = "platoon",
    version,
    about = "Platoon robustness analysis, H∞ synthesis, simulation and topology search"
)]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Accepted for reproducible pipelines; every command is deterministic.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// γ-gain scaling sweep over platoon sizes.
    Analyze,
    /// Synthesize gains and coupling strength for a topology.
    Synth,
    /// Time-domain simulation.
    Simulate {
        /// Builtin scenario instead of --config: sine-disturbance or leader-ramp.
        #[arg(long, conflicts_with = "config")]
        preset: Option<String>,
        /// Reference topology for --preset (a, b, c or d).
        #[arg(long, default_value = "a", requires = "preset")]
        topology: String,
    },
    /// Search for a topology maximizing λ_min under a link budget.
    Optimize,
}

fn require_config(cli: &Cli) -> Result<&PathBuf, Failure> {
    cli.config.as_ref().ok_or(Failure {
        code: run::EXIT_INVALID,
        message: "--config is required".into(),
    })
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Analyze => run::analyze(&run::load(require_config(cli)?)?, &cli.out),
        Command::Synth => run::synth(&run::load(require_config(cli)?)?, &cli.out),
        Command::Simulate { preset, topology } => {
            let cfg = match preset {
                Some(name) => run::preset(name, topology)?,
                None => run::load(require_config(cli)?)?,
            };
            run::simulate(&cfg, &cli.out)
        }
        Command::Optimize => run::optimize(&run::load(require_config(cli)?)?, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if w == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(run::EXIT_INVALID);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let _ = cli.seed;
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
