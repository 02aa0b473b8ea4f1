use std::sync::Arc;

use nalgebra::DVector;
use pgd_core::calculus::{bound_terms, AnalyticModel, BoundInit, GaussianMeasure};
use pgd_core::metrics::{d_random_estimate, exp_rate_fit, loglog_slope, DEstimate, SlopeFit};
use pgd_core::model::{concavity_constants, LatentModel, ModelRegistry};
use pgd_core::sampler::{Init, RunConfig};

use super::{add_checks, all_pass, check_summary, Check, Outputs};
use crate::output::{fmt, Chart, Table};
use crate::spec::{Axis, ExperimentSpec, ScanSection};
use crate::{Command, CommandOutcome, LabError, Report};

/// Pinned values for the terms that are not swept.
pub const PINNED_N_LARGE: usize = 8192;
pub const PINNED_H_SMALL: f64 = 1e-3;
pub const PINNED_H_K_SCAN: f64 = 1e-2;
/// `K = ceil(CONTRACTION_HORIZON / (hλ))` leaves `e^{−hλK} ≤ e^{−12}`.
pub const CONTRACTION_HORIZON: f64 = 12.0;
/// Default `c` in `h = c/M` and particle count for the `m` axis.
pub const DEFAULT_M_STEP_CONSTANT: f64 = 0.3;
pub const DEFAULT_M_PARTICLES: usize = 1024;

/// Acceptance bands.
pub const N_SLOPE_BAND: (f64, f64) = (-0.7, -0.3);
pub const K_RATE_FRACTION: f64 = 0.8;
pub const M_RATIO_MAX: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub value: f64,
    pub h: f64,
    pub n: usize,
    pub k: u64,
    pub lambda: f64,
    pub estimate: DEstimate,
    /// Error-bound right-hand side for the same `(h, N, K)`, when defined.
    pub bound_rhs: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ScanReport {
    pub axis: Axis,
    pub points: Vec<ScanPoint>,
    pub fit: Option<SlopeFit>,
    pub checks: Vec<Check>,
}

struct Plan {
    model: Arc<dyn LatentModel>,
    value: f64,
    h: f64,
    n: usize,
    k: u64,
    lambda: f64,
}

fn horizon_steps(h: f64, lambda: f64) -> u64 {
    (CONTRACTION_HORIZON / (h * lambda)).ceil() as u64
}

fn as_count(axis: Axis, v: f64) -> Result<u64, LabError> {
    if v >= 1.0 && v.fract() == 0.0 && v < 1e15 {
        Ok(v as u64)
    } else {
        Err(LabError::Config(format!("{}-scan grid values must be positive integers, got {v}", axis.name())))
    }
}

fn plan(spec: &ExperimentSpec, s: &ScanSection) -> Result<Vec<Plan>, LabError> {
    if s.grid.len() < 3 {
        return Err(LabError::Config(format!("scan grid needs at least 3 values, got {}", s.grid.len())));
    }
    if s.axis == Axis::M {
        let c = s.c.unwrap_or(DEFAULT_M_STEP_CONSTANT);
        let n = s.n.unwrap_or(DEFAULT_M_PARTICLES);
        let base = spec.model_table()?;
        let registry = ModelRegistry::default();
        return s
            .grid
            .iter()
            .map(|&v| {
                let m = as_count(s.axis, v)?;
                let mut table = base.clone();
                table.insert("datapoints".into(), toml::Value::Integer(m as i64));
                let model = registry.build(&table)?;
                let consts = concavity_constants(model.as_ref())?;
                let h = c / m as f64;
                if h > consts.max_step() {
                    return Err(LabError::Config(format!(
                        "h = {c}/{m} exceeds 1/(λ+L) = {} for M = {m}",
                        consts.max_step()
                    )));
                }
                let k = s.k.unwrap_or_else(|| horizon_steps(h, consts.lambda));
                Ok(Plan { model, value: v, h, n, k, lambda: consts.lambda })
            })
            .collect();
    }
    let model = spec.build_model()?;
    let consts = concavity_constants(model.as_ref())?;
    let lambda = consts.lambda;
    s.grid
        .iter()
        .map(|&v| {
            let (h, n, k) = match s.axis {
                Axis::H => {
                    if !(v > 0.0 && v <= consts.max_step()) {
                        return Err(LabError::Config(format!(
                            "h-scan values must lie in (0, 1/(λ+L)] = (0, {}], got {v}",
                            consts.max_step()
                        )));
                    }
                    (v, s.n.unwrap_or(PINNED_N_LARGE), s.k.unwrap_or_else(|| horizon_steps(v, lambda)))
                }
                Axis::N => {
                    let h = s.h.unwrap_or(PINNED_H_SMALL);
                    (h, as_count(s.axis, v)? as usize, s.k.unwrap_or_else(|| horizon_steps(h, lambda)))
                }
                Axis::K => (s.h.unwrap_or(PINNED_H_K_SCAN), s.n.unwrap_or(PINNED_N_LARGE), as_count(s.axis, v)?),
                Axis::M => unreachable!(),
            };
            Ok(Plan { model: model.clone(), value: v, h, n, k, lambda })
        })
        .collect()
}

fn bound_rhs(model: &dyn LatentModel, init: &Init, h: f64, n: usize, k: u64) -> Option<f64> {
    let analytic = AnalyticModel::from_model(model).ok()?;
    let binit = match init {
        Init::WarmStart => BoundInit::WarmStart,
        Init::Gaussian { theta, mean, cov, theta_std } if *theta_std == 0.0 => {
            let cov = pgd_core::linalg::from_rows(cov).ok()?;
            BoundInit::Gaussian {
                theta: DVector::from_column_slice(theta),
                q: GaussianMeasure::new(DVector::from_column_slice(mean), cov).ok()?,
            }
        }
        _ => return None,
    };
    bound_terms(&analytic, h, n, k, &binit).ok().map(|b| b.rhs)
}

fn point_row(p: &ScanPoint) -> Vec<String> {
    vec![
        fmt(p.value),
        fmt(p.h),
        p.n.to_string(),
        p.k.to_string(),
        fmt(p.estimate.estimate),
        fmt(p.estimate.std_error),
        fmt(p.estimate.theta_sq_mean),
        fmt(p.estimate.w2_sq_mean),
        p.bound_rhs.map_or_else(String::new, fmt),
    ]
}

const COLUMNS: [&str; 9] = ["value", "h", "n", "k", "estimate", "std_error", "theta_sq_mean", "w2_sq_mean", "bound_rhs"];

fn fit_and_check(axis: Axis, points: &[ScanPoint]) -> Result<(SlopeFit, Vec<Check>), LabError> {
    let xs: Vec<f64> = points.iter().map(|p| p.value).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.estimate.estimate).collect();
    Ok(match axis {
        Axis::H => {
            let fit = loglog_slope(&xs, &ys)?;
            let mut order: Vec<&ScanPoint> = points.iter().collect();
            order.sort_by(|a, b| b.h.total_cmp(&a.h));
            let monotone = order.windows(2).all(|w| w[1].estimate.estimate <= w[0].estimate.estimate);
            let worst = points
                .iter()
                .map(|p| p.bound_rhs.map_or(f64::INFINITY, |r| p.estimate.estimate / r))
                .fold(0.0, f64::max);
            (fit, vec![Check::flag("monotone_in_h", monotone), Check::at_most("max_error_over_bound", worst, 1.0)])
        }
        Axis::N => {
            let fit = loglog_slope(&xs, &ys)?;
            let c = Check::within("loglog_slope", fit.slope, N_SLOPE_BAND.0, N_SLOPE_BAND.1);
            (fit, vec![c])
        }
        Axis::K => {
            let fit = exp_rate_fit(&xs, &ys)?;
            let hl = points[0].h * points[0].lambda;
            (fit, vec![Check::at_least("rate_over_h_lambda", fit.rate() / hl, K_RATE_FRACTION)])
        }
        Axis::M => {
            let fit = loglog_slope(&xs, &ys)?;
            let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
            (fit, vec![Check::at_most("max_over_min_error", max / min, M_RATIO_MAX)])
        }
    })
}

pub fn execute(spec: &ExperimentSpec) -> Result<CommandOutcome, LabError> {
    let s = spec.scan.as_ref().ok_or_else(|| LabError::Config("`scan` needs a [scan] section".into()))?;
    if spec.replicates < 2 {
        return Err(LabError::Config("scan needs at least 2 replicates".into()));
    }
    let plans = plan(spec, s)?;
    let outputs = Outputs::new(&spec.out_dir(), "scan")?;
    let mut table = Table::new("scan", COLUMNS);
    let mut points = Vec::with_capacity(plans.len());
    for p in plans {
        let config = RunConfig::new(p.h, p.n, p.k, spec.seed).with_algorithm(&s.algorithm).with_init(s.init.clone());
        let estimate = match d_random_estimate(p.model.as_ref(), &config, spec.replicates) {
            Ok(e) => e,
            Err(e) => {
                table.footer("aborted", &[fmt(p.value), e.to_string().replace(',', ";")]);
                table.write(&outputs.csv)?;
                return Err(e.into());
            }
        };
        let point = ScanPoint {
            value: p.value,
            h: p.h,
            n: p.n,
            k: p.k,
            lambda: p.lambda,
            bound_rhs: bound_rhs(p.model.as_ref(), &s.init, p.h, p.n, p.k),
            estimate,
        };
        table.push(point_row(&point));
        table.write(&outputs.csv)?;
        points.push(point);
    }
    let (fit, checks) = fit_and_check(s.axis, &points)?;
    let fit_name = if s.axis == Axis::K { "exp_rate" } else { "loglog_slope" };
    table.footer("axis", &[s.axis.name().into()]);
    table.footer(
        "fit",
        &[fit_name.into(), fmt(fit.slope), fmt(fit.intercept), fmt(fit.r_squared), fit.n_points.to_string()],
    );
    add_checks(&mut table, &checks);
    let chart = Chart {
        title: format!("{}-scan: d estimate", s.axis.name()),
        x: "value".into(),
        ys: if s.axis == Axis::H { vec!["estimate".into(), "bound_rhs".into()] } else { vec!["estimate".into()] },
        log_x: s.axis != Axis::K,
        log_y: true,
    };
    outputs.finish(&table, &chart)?;

    let mut summary = format!("scan over {} ({} points, R = {}):\n", s.axis.name(), points.len(), spec.replicates);
    for p in &points {
        summary.push_str(&format!(
            "  {} = {}: d = {:.6} ± {:.6} (h = {}, N = {}, K = {})\n",
            s.axis.name(),
            p.value,
            p.estimate.estimate,
            p.estimate.std_error,
            p.h,
            p.n,
            p.k
        ));
    }
    summary.push_str(&format!("  fit {fit_name}: slope = {:.6}, r² = {:.4}\n", fit.slope, fit.r_squared));
    summary.push_str(&check_summary(&checks));
    Ok(CommandOutcome {
        command: Command::Scan,
        csv: outputs.csv,
        svg: outputs.svg,
        extra: Vec::new(),
        passed: all_pass(&checks),
        summary,
        report: Report::Scan(ScanReport { axis: s.axis, points, fit: Some(fit), checks }),
    })
}
