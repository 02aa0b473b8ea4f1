use nalgebra::{DMatrix, DVector};
use pgd_core::calculus::{AnalyticModel, FlowState, GaussianMeasure};
use pgd_core::metrics::{exp_rate_fit, SlopeFit};

use super::{add_checks, all_pass, check_summary, Check, Outputs};
use crate::output::{fmt, Chart, Table};
use crate::spec::{ExperimentSpec, FlowSection};
use crate::{Command, CommandOutcome, LabError, Report};

/// Acceptance thresholds.
pub const F_RATE_FRACTION: f64 = 1.99;
pub const D_RATE_FRACTION: f64 = 0.99;
pub const MAX_EXCESS: f64 = 1e-8;
pub const MAX_DEBRUIJN: f64 = 1e-4;
pub const MIN_HALVING_RATIO: f64 = 3.0;
/// Below this the residual is rounding noise and its halving ratio meaningless.
pub const RESIDUAL_FLOOR: f64 = 1e-12;
/// Default horizon `t_end = DEFAULT_HORIZON / λ`.
pub const DEFAULT_HORIZON: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct FlowReport {
    pub lambda: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Recorded times and their `F − F*` and `d`.
    pub times: Vec<f64>,
    pub excess: Vec<f64>,
    pub distance: Vec<f64>,
    pub max_debruijn: f64,
    /// Same maximum with `dt/2`.
    pub max_debruijn_half: f64,
    pub max_theorem9_excess: f64,
    pub max_theorem2_excess: f64,
    pub f_fit: Option<SlopeFit>,
    pub d_fit: Option<SlopeFit>,
    pub checks: Vec<Check>,
}

fn initial(model: &AnalyticModel, f: &FlowSection) -> Result<FlowState, LabError> {
    let (dt, dx) = (model.dim_theta(), model.dim_x());
    let theta = DVector::from_vec(f.theta.clone().unwrap_or_else(|| vec![0.0; dt]));
    let mean = DVector::from_vec(f.mean.clone().unwrap_or_else(|| vec![0.0; dx]));
    let cov = match &f.cov {
        Some(rows) => pgd_core::linalg::from_rows(rows)?,
        None => DMatrix::identity(dx, dx),
    };
    if theta.len() != dt || mean.len() != dx {
        return Err(LabError::Config(format!("flow start needs theta of length {dt} and mean of length {dx}")));
    }
    Ok(FlowState::new(theta, GaussianMeasure::new(mean, cov)?))
}

fn integrate(model: &AnalyticModel, init: &FlowState, t_end: f64, dt: f64) -> Result<Vec<FlowState>, LabError> {
    model.integrate_flow(init, t_end, dt).map_err(|e| match e {
        pgd_core::Error::IntegrationFailure { .. } => {
            LabError::Runtime(format!("{e}; suggested dt = {}", dt / 10.0))
        }
        other => other.into(),
    })
}

fn positive_fit(ts: &[f64], ys: &[f64]) -> Option<SlopeFit> {
    let (t, y): (Vec<f64>, Vec<f64>) = ts.iter().zip(ys).filter(|(_, &y)| y > 0.0).map(|(&t, &y)| (t, y)).unzip();
    exp_rate_fit(&t, &y).ok()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

pub fn execute(spec: &ExperimentSpec) -> Result<CommandOutcome, LabError> {
    let f = spec.flow.clone().unwrap_or_default();
    let model = AnalyticModel::from_model(spec.build_model()?.as_ref())?;
    let lambda = model.lambda();
    let t_end = f.t_end.unwrap_or(DEFAULT_HORIZON / lambda);
    if !(f.dt > 0.0) || !(t_end >= 0.0) || f.record_every == 0 {
        return Err(LabError::Config("flow needs dt > 0, t_end >= 0 and record_every >= 1".into()));
    }
    let init = initial(&model, &f)?;
    let traj = integrate(&model, &init, t_end, f.dt)?;
    let residual = if traj.len() >= 3 { model.debruijn_residual(&traj)? } else { Vec::new() };
    let half = integrate(&model, &init, t_end, f.dt / 2.0)?;
    let residual_half = if half.len() >= 3 { model.debruijn_residual(&half)? } else { Vec::new() };
    let th9 = model.theorem9_excess(&traj)?;
    let th2 = model.theorem2_excess(&traj)?;

    let dx = model.dim_x();
    let mut columns = vec!["t".to_string()];
    columns.extend((0..model.dim_theta()).map(|i| format!("theta_{i}")));
    columns.extend((0..dx).map(|i| format!("mean_{i}")));
    columns.extend((0..dx).flat_map(|i| (i..dx).map(move |j| format!("cov_{i}_{j}"))));
    columns.extend(
        ["free_energy", "excess_free_energy", "fisher_info", "d", "debruijn_residual", "theorem9_excess", "theorem2_excess"]
            .map(String::from),
    );
    let mut table = Table::new("flow", columns);
    let (mut times, mut excess, mut distance) = (Vec::new(), Vec::new(), Vec::new());
    let last = traj.len() - 1;
    for (i, s) in traj.iter().enumerate() {
        if i % f.record_every != 0 && i != last {
            continue;
        }
        let g = model.excess_free_energy(&s.theta, &s.q)?;
        let d = model.distance_to_optimum(&s.theta, &s.q)?;
        let mut row = vec![fmt(s.t)];
        row.extend(s.theta.iter().map(|&v| fmt(v)));
        row.extend(s.q.mean().iter().map(|&v| fmt(v)));
        row.extend((0..dx).flat_map(|a| (a..dx).map(move |b| (a, b))).map(|(a, b)| fmt(s.q.cov()[(a, b)])));
        row.push(fmt(model.free_energy(&s.theta, &s.q)?));
        row.push(fmt(g));
        row.push(fmt(model.fisher_info(&s.theta, &s.q)?));
        row.push(fmt(d));
        row.push(if i == 0 || i == last { String::new() } else { fmt(residual[i - 1]) });
        row.push(fmt(th9[i]));
        row.push(fmt(th2[i]));
        table.push(row);
        times.push(s.t);
        excess.push(g);
        distance.push(d);
    }

    let f_fit = positive_fit(&times, &excess);
    let d_fit = positive_fit(&times, &distance);
    let (max_res, max_res_half) = (max_of(&residual), max_of(&residual_half));
    let max9 = th9.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let max2 = th2.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut checks = Vec::new();
    if let Some(fit) = &f_fit {
        checks.push(Check::at_least("free_energy_rate_over_lambda", fit.rate() / lambda, F_RATE_FRACTION));
    }
    if let Some(fit) = &d_fit {
        checks.push(Check::at_least("distance_rate_over_lambda", fit.rate() / lambda, D_RATE_FRACTION));
    }
    checks.push(Check::at_most("max_theorem9_excess", max9, MAX_EXCESS));
    if !residual.is_empty() {
        checks.push(Check::at_most("max_debruijn_residual", max_res, MAX_DEBRUIJN));
    }
    if max_res_half > RESIDUAL_FLOOR {
        checks.push(Check::at_least("debruijn_halving_ratio", max_res / max_res_half, MIN_HALVING_RATIO));
    }
    for (name, fit) in [("free_energy", &f_fit), ("distance", &d_fit)] {
        if let Some(fit) = fit {
            table.footer("fit", &[format!("{name}_exp_rate"), fmt(fit.rate()), fmt(fit.intercept), fmt(fit.r_squared)]);
        }
    }
    table.footer("lambda", &[fmt(lambda)]);
    add_checks(&mut table, &checks);
    let outputs = Outputs::new(&spec.out_dir(), "flow")?;
    let chart = Chart {
        title: "flow: F - F* and d".into(),
        x: "t".into(),
        ys: vec!["excess_free_energy".into(), "d".into()],
        log_x: false,
        log_y: true,
    };
    outputs.finish(&table, &chart)?;

    let mut summary = format!(
        "flow to t = {t_end:.4} with dt = {} (λ = {lambda:.6}):\n  final F - F* = {:e}, final d = {:e}\n",
        f.dt,
        excess.last().copied().unwrap_or(0.0),
        distance.last().copied().unwrap_or(0.0)
    );
    summary.push_str(&check_summary(&checks));
    Ok(CommandOutcome {
        command: Command::Flow,
        csv: outputs.csv,
        svg: outputs.svg,
        extra: Vec::new(),
        passed: all_pass(&checks),
        summary,
        report: Report::Flow(FlowReport {
            lambda,
            t_end,
            dt: f.dt,
            times,
            excess,
            distance,
            max_debruijn: max_res,
            max_debruijn_half: max_res_half,
            max_theorem9_excess: max9,
            max_theorem2_excess: max2,
            f_fit,
            d_fit,
            checks,
        }),
    })
}
