use std::time::Instant;

use pgd_core::sampler::{run, RunConfig, Trajectory};

use super::{join_f64, Outputs};
use crate::output::{fmt, Chart, Table};
use crate::spec::{ExperimentSpec, RunSection};
use crate::{CommandOutcome, Command, LabError, Report};

#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub trajectory: Trajectory,
    pub wall_seconds: f64,
}

/// Snapshot spacing when none is configured: about 100 rows per run.
fn default_record_every(k: u64) -> u64 {
    (k / 100).max(1)
}

pub fn run_config(section: &RunSection, seed: u64) -> RunConfig {
    RunConfig {
        h: section.h,
        n: section.n,
        k: section.k,
        seed,
        algorithm: section.algorithm.clone(),
        init: section.init.clone(),
        record_every: section.record_every.unwrap_or_else(|| default_record_every(section.k)),
        record_particles: section.record_particles,
    }
}

pub fn execute(spec: &ExperimentSpec) -> Result<CommandOutcome, LabError> {
    let section = spec.run.as_ref().ok_or_else(|| LabError::Config("`run` needs a [run] section".into()))?;
    let model = spec.build_model()?;
    let config = run_config(section, spec.seed);
    let start = Instant::now();
    let trajectory = run(model.as_ref(), &config)?;
    let wall_seconds = start.elapsed().as_secs_f64();

    let (dt, dx) = (model.dim_theta(), model.dim_x());
    let mut columns = vec!["step".to_string()];
    columns.extend((0..dt).map(|i| format!("theta_{i}")));
    columns.extend((0..dx).map(|i| format!("mean_x_{i}")));
    columns.extend((0..dx).flat_map(|i| (i..dx).map(move |j| format!("cov_x_{i}_{j}"))));
    let mut table = Table::new("run", columns);
    for s in &trajectory.snapshots {
        let mut row = vec![s.step.to_string()];
        row.extend(s.theta.iter().map(|&v| fmt(v)));
        row.extend(s.mean_x.iter().map(|&v| fmt(v)));
        row.extend((0..dx).flat_map(|i| (i..dx).map(move |j| (i, j))).map(|(i, j)| fmt(s.cov_x[i * dx + j])));
        table.push(row);
    }
    let outputs = Outputs::new(&spec.out_dir(), "run")?;
    let chart = Chart {
        title: format!("{} run: h = {}, N = {}", config.algorithm, config.h, config.n),
        x: "step".into(),
        ys: vec!["theta_0".into(), "mean_x_0".into(), "cov_x_0_0".into()],
        log_x: false,
        log_y: false,
    };
    outputs.finish(&table, &chart)?;

    let mut extra = Vec::new();
    if config.record_particles {
        let mut columns = vec!["step".to_string(), "particle".to_string()];
        columns.extend((0..dx).map(|j| format!("x_{j}")));
        let mut pt = Table::new("run-particles", columns);
        for s in &trajectory.snapshots {
            if let Some(p) = &s.particles {
                for (i, x) in p.chunks_exact(dx).enumerate() {
                    let mut row = vec![s.step.to_string(), i.to_string()];
                    row.extend(x.iter().map(|&v| fmt(v)));
                    pt.push(row);
                }
            }
        }
        let path = outputs.csv.with_file_name(format!(
            "{}-particles.csv",
            outputs.csv.file_stem().and_then(|s| s.to_str()).unwrap_or("run")
        ));
        pt.write(&path)?;
        extra.push(path);
    }

    let last = trajectory.snapshots.last().expect("a run records at least one snapshot");
    let summary = format!(
        "run: {} steps of {} with h = {}, N = {}\n  final theta = [{}]\n  final particle mean = [{}]\n  final particle cov = [{}]\n  wall time = {:.3} s",
        config.k,
        config.algorithm,
        config.h,
        config.n,
        join_f64(&last.theta),
        join_f64(&last.mean_x),
        join_f64(&last.cov_x),
        wall_seconds
    );
    Ok(CommandOutcome {
        command: Command::Run,
        csv: outputs.csv,
        svg: outputs.svg,
        extra,
        passed: true,
        summary,
        report: Report::Run(RunReport { config, trajectory, wall_seconds }),
    })
}
