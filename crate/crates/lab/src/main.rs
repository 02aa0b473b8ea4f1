use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pgd_lab::{execute, resolve_workers, Command, ExperimentSpec, LabError, EXIT_CHECK_FAILED};

#[derive(Parser)]
#[command(name = "pgd-lab", version, about = "Particle gradient descent experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Single sampler run; writes the trajectory.
    Run(Opts),
    /// Error estimates over a grid of h, N, K or M.
    Scan(Opts),
    /// Integrate the continuous-time flow of a quadratic model.
    Flow(Opts),
    /// Sweep Gaussian states through the functional inequalities.
    CheckInequalities(Opts),
    /// Compare measured errors with the non-asymptotic error bound.
    BoundAudit(Opts),
}

#[derive(Args)]
struct Opts {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (default: the file's `out`, else `results`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo replicates.
    #[arg(long)]
    replicates: Option<usize>,
    /// Worker threads; PGD_LAB_WORKERS takes precedence.
    #[arg(long)]
    workers: Option<usize>,
}

fn go(command: Command, opts: Opts) -> Result<bool, LabError> {
    let mut spec = ExperimentSpec::load(&opts.config)?;
    if let Some(out) = opts.out {
        spec.out = Some(out);
    }
    if let Some(seed) = opts.seed {
        spec.seed = seed;
    }
    if let Some(r) = opts.replicates {
        if r == 0 {
            return Err(LabError::Config("--replicates must be at least 1".into()));
        }
        spec.replicates = r;
    }
    let env = std::env::var("PGD_LAB_WORKERS").ok();
    let workers = resolve_workers(env.as_deref(), opts.workers, spec.workers)?;
    let outcome = execute(command, &spec, workers)?;
    println!("{}", outcome.summary);
    println!("wrote {}", outcome.csv.display());
    println!("wrote {}", outcome.svg.display());
    for p in &outcome.extra {
        println!("wrote {}", p.display());
    }
    Ok(outcome.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match cli.command {
        Cmd::Run(o) => (Command::Run, o),
        Cmd::Scan(o) => (Command::Scan, o),
        Cmd::Flow(o) => (Command::Flow, o),
        Cmd::CheckInequalities(o) => (Command::CheckInequalities, o),
        Cmd::BoundAudit(o) => (Command::BoundAudit, o),
    };
    match go(command, opts) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("pgd-lab {}: check failed", command.name());
            ExitCode::from(EXIT_CHECK_FAILED as u8)
        }
        Err(e) => {
            eprintln!("pgd-lab {}: {e}", command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
