//! Experiment harness: single runs, parameter scans, flow integration,
//! inequality sweeps and error-bound audits, each writing a versioned CSV and
//! an SVG chart rendered from that CSV.

pub mod commands;
pub mod output;
pub mod spec;

use std::path::PathBuf;

pub use commands::{
    AuditReport, AuditRow, Check, FlowReport, InequalityReport, RunReport, ScanPoint, ScanReport,
};
pub use spec::{resolve_workers, ExperimentSpec};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl LabError {
    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Config(_) => 2,
            LabError::Runtime(_) => 1,
        }
    }
}

impl From<pgd_core::Error> for LabError {
    fn from(e: pgd_core::Error) -> Self {
        if e.is_config() {
            LabError::Config(e.to_string())
        } else {
            LabError::Runtime(e.to_string())
        }
    }
}

/// Exit code when every command succeeded but a check failed.
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Scan,
    Flow,
    CheckInequalities,
    BoundAudit,
}

impl Command {
    pub const ALL: [Command; 5] =
        [Command::Run, Command::Scan, Command::Flow, Command::CheckInequalities, Command::BoundAudit];

    pub fn name(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Scan => "scan",
            Command::Flow => "flow",
            Command::CheckInequalities => "check-inequalities",
            Command::BoundAudit => "bound-audit",
        }
    }
}

/// Typed result of a command.
#[derive(Debug, Clone)]
pub enum Report {
    Run(RunReport),
    Scan(ScanReport),
    Flow(FlowReport),
    Inequalities(InequalityReport),
    Audit(AuditReport),
}

#[derive(Debug, Clone)]
pub struct CommandOutcome {
    pub command: Command,
    pub csv: PathBuf,
    pub svg: PathBuf,
    /// Further files, e.g. recorded particles.
    pub extra: Vec<PathBuf>,
    /// False when a pass/fail check of the command failed.
    pub passed: bool,
    /// Human-readable summary for standard output.
    pub summary: String,
    pub report: Report,
}

/// Runs `command` on a pool of `workers` threads.
pub fn execute(command: Command, spec: &ExperimentSpec, workers: usize) -> Result<CommandOutcome, LabError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| LabError::Runtime(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match command {
        Command::Run => commands::run::execute(spec),
        Command::Scan => commands::scan::execute(spec),
        Command::Flow => commands::flow::execute(spec),
        Command::CheckInequalities => commands::inequalities::execute(spec),
        Command::BoundAudit => commands::audit::execute(spec),
    })
}
