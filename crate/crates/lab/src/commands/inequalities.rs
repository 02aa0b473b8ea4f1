use pgd_core::calculus::{AnalyticModel, GaussianSweep};
use rayon::prelude::*;

use super::{add_checks, all_pass, check_summary, Check, Outputs};
use crate::output::{fmt, Chart, Table};
use crate::spec::ExperimentSpec;
use crate::{Command, CommandOutcome, LabError, Report};

/// Rounding allowance on every inequality.
pub const TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct InequalityReport {
    pub lambda: f64,
    pub states: u64,
    /// States whose ratio is undefined because they sit at the optimum.
    pub skipped_ratio: u64,
    pub min_xlsi_ratio: f64,
    pub max_xlsi_ratio: f64,
    pub min_xt2i_slack: f64,
    pub min_logz_bound_gap: f64,
    pub checks: Vec<Check>,
}

struct Row {
    ratio: Option<f64>,
    slack: f64,
    gap: f64,
}

pub fn execute(spec: &ExperimentSpec) -> Result<CommandOutcome, LabError> {
    let sec = spec.inequalities.clone().unwrap_or_default();
    let base = AnalyticModel::from_model(spec.build_model()?.as_ref())?;
    let model = if sec.scale == 1.0 { base } else { AnalyticModel::new(&base.model().scaled(sec.scale)?)? };
    let sweep = GaussianSweep::for_model(&model, sec.sweep_seed);
    let rows: Vec<Result<Row, LabError>> = (0..sec.sweep_size)
        .into_par_iter()
        .map(|id| {
            let s = sweep.state(id);
            let q = if sec.slice { model.posterior(&s.theta)? } else { s.q };
            let ratio = match model.xlsi_ratio(&s.theta, &q) {
                Ok(r) => Some(r),
                Err(pgd_core::Error::NearOptimal { .. }) => None,
                Err(e) => return Err(e.into()),
            };
            Ok(Row { ratio, slack: model.xt2i_slack(&s.theta, &q)?, gap: model.log_z_upper_bound_slack(&s.theta, &q)? })
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>, _>>()?;

    let mut table = Table::new("check-inequalities", ["id", "xlsi_ratio", "xt2i_slack", "logz_bound_gap"]);
    for (id, r) in rows.iter().enumerate() {
        table.push(vec![id.to_string(), r.ratio.map_or_else(String::new, fmt), fmt(r.slack), fmt(r.gap)]);
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min_slack = rows.iter().map(|r| r.slack).fold(f64::INFINITY, f64::min);
    let min_gap = rows.iter().map(|r| r.gap).fold(f64::INFINITY, f64::min);
    let checks = if rows.is_empty() {
        Vec::new()
    } else {
        let mut c = vec![Check::at_least("min_xt2i_slack", min_slack, -TOLERANCE), Check::at_least("min_logz_bound_gap", min_gap, -TOLERANCE)];
        if !ratios.is_empty() {
            c.insert(0, Check::at_least("min_xlsi_ratio", min_ratio, 1.0 - TOLERANCE));
        }
        c
    };
    table.footer("lambda", &[fmt(model.lambda())]);
    table.footer("sweep", &[sec.sweep_seed.to_string(), sec.sweep_size.to_string(), if sec.slice { "slice" } else { "gaussian" }.into(), fmt(sec.scale)]);
    if !ratios.is_empty() {
        table.footer("max_xlsi_ratio", &[fmt(max_ratio)]);
    }
    add_checks(&mut table, &checks);
    let outputs = Outputs::new(&spec.out_dir(), "check-inequalities")?;
    let chart = Chart {
        title: "inequality sweep".into(),
        x: "id".into(),
        ys: vec!["xlsi_ratio".into(), "xt2i_slack".into(), "logz_bound_gap".into()],
        log_x: false,
        log_y: false,
    };
    outputs.finish(&table, &chart)?;

    let skipped = rows.len() as u64 - ratios.len() as u64;
    let mut summary = format!(
        "inequality sweep over {} {} states (λ = {:.6}, scale = {}):\n  xlsi ratio in [{min_ratio:.6}, {max_ratio:.6}] ({skipped} at the optimum)\n",
        sec.sweep_size,
        if sec.slice { "slice" } else { "Gaussian" },
        model.lambda(),
        sec.scale
    );
    summary.push_str(&check_summary(&checks));
    Ok(CommandOutcome {
        command: Command::CheckInequalities,
        csv: outputs.csv,
        svg: outputs.svg,
        extra: Vec::new(),
        passed: all_pass(&checks),
        summary,
        report: Report::Inequalities(InequalityReport {
            lambda: model.lambda(),
            states: sec.sweep_size,
            skipped_ratio: skipped,
            min_xlsi_ratio: min_ratio,
            max_xlsi_ratio: max_ratio,
            min_xt2i_slack: min_slack,
            min_logz_bound_gap: min_gap,
            checks,
        }),
    })
}
