use rayon::prelude::*;

use super::wasserstein::{w2_empirical, PointCloud};
use crate::error::{Error, Result};
use crate::model::{analytic_optimum, LatentModel};
use crate::rng::derive_seed;
use crate::sampler::{run_observed, RunConfig};

/// Squared error components of one replicate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateError {
    pub seed: u64,
    /// `‖Θ_K − θ*‖²`.
    pub theta_sq: f64,
    /// `W₂(Q_K, Q*ᴺ)²` for an independent reference cloud `Q*ᴺ`.
    pub w2_sq: f64,
}

impl ReplicateError {
    pub fn total(&self) -> f64 {
        self.theta_sq + self.w2_sq
    }
}

/// Monte Carlo estimate of `√(E‖Θ_K − θ*‖² + E W₂(Q_K, Q*ᴺ)²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DEstimate {
    pub estimate: f64,
    /// Delta-method standard error of `estimate`.
    pub std_error: f64,
    pub theta_sq_mean: f64,
    pub w2_sq_mean: f64,
    pub replicates: Vec<ReplicateError>,
}

/// Error components for a final state against `θ*` and a reference cloud.
pub fn replicate_error(
    seed: u64,
    theta: &[f64],
    cloud: &PointCloud,
    theta_star: &[f64],
    reference: &PointCloud,
) -> Result<ReplicateError> {
    let theta_sq = theta.iter().zip(theta_star).map(|(a, b)| (a - b) * (a - b)).sum();
    let w = w2_empirical(cloud, reference)?;
    Ok(ReplicateError { seed, theta_sq, w2_sq: w * w })
}

/// Mean and delta-method standard error of `√(mean)` over replicates.
pub fn summarize(replicates: Vec<ReplicateError>) -> Result<DEstimate> {
    let r = replicates.len();
    if r < 2 {
        return Err(Error::Config(format!("need at least 2 replicates, got {r}")));
    }
    let rf = r as f64;
    let totals: Vec<f64> = replicates.iter().map(ReplicateError::total).collect();
    let mean = totals.iter().sum::<f64>() / rf;
    let var = totals.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (rf - 1.0);
    let estimate = mean.sqrt();
    let std_error = if mean > 0.0 { (var / rf).sqrt() / (2.0 * estimate) } else { 0.0 };
    Ok(DEstimate {
        estimate,
        std_error,
        theta_sq_mean: replicates.iter().map(|e| e.theta_sq).sum::<f64>() / rf,
        w2_sq_mean: replicates.iter().map(|e| e.w2_sq).sum::<f64>() / rf,
        replicates,
    })
}

/// Seed of replicate `r` of a run configured with `base`.
pub fn replicate_seed(base: u64, r: usize) -> u64 {
    derive_seed(base, r as u64)
}

/// Runs `replicates` independent copies of `config` (seeds derived from
/// `config.seed`) and estimates `d` to `(θ*, Q*ᴺ)` under the independent
/// coupling, `Q*ᴺ` being a fresh `N`-sample from `π*` per replicate.
pub fn d_random_estimate(model: &dyn LatentModel, config: &RunConfig, replicates: usize) -> Result<DEstimate> {
    if replicates < 2 {
        return Err(Error::Config(format!("need at least 2 replicates, got {replicates}")));
    }
    let opt = analytic_optimum(model)?;
    let theta_star: Vec<f64> = opt.theta.iter().copied().collect();
    let errors: Vec<Result<ReplicateError>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let seed = replicate_seed(config.seed, r);
            let cfg = RunConfig { seed, ..config.clone() };
            let last = run_observed(model, &cfg, |_| {})?;
            let cloud = PointCloud::from_state(&last);
            let reference = PointCloud::sample(&opt.posterior, config.n, seed);
            replicate_error(seed, &last.theta, &cloud, &theta_star, &reference)
        })
        .collect();
    summarize(errors.into_iter().collect::<Result<Vec<_>>>()?)
}
