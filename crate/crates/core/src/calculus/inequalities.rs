use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::analytic::AnalyticModel;
use super::measure::GaussianMeasure;
use crate::error::{Error, Result};
use crate::rng::{NoiseStream, Purpose};

/// Gap below which `F − F*` is treated as zero and ratios are refused.
pub const NEAR_OPTIMAL_GAP: f64 = 1e-12;

impl AnalyticModel {
    /// `I / (2λ(F − F*))`; strong concavity predicts `≥ 1`.
    pub fn xlsi_ratio(&self, theta: &DVector<f64>, q: &GaussianMeasure) -> Result<f64> {
        let gap = self.excess_free_energy(theta, q)?;
        if gap < NEAR_OPTIMAL_GAP {
            return Err(Error::NearOptimal { gap });
        }
        Ok(self.fisher_info(theta, q)? / (2.0 * self.lambda() * gap))
    }

    /// `2(F − F*) − λ d²` to the optimum; predicted `≥ 0`.
    pub fn xt2i_slack(&self, theta: &DVector<f64>, q: &GaussianMeasure) -> Result<f64> {
        let gap = self.excess_free_energy(theta, q)?;
        let d = self.distance_to_optimum(theta, q)?;
        Ok(2.0 * gap - self.lambda() * d * d)
    }

    /// `I/(2λ) − F`, an upper bound on `log Z*`.
    pub fn log_z_upper_bound(&self, theta: &DVector<f64>, q: &GaussianMeasure) -> Result<f64> {
        Ok(self.fisher_info(theta, q)? / (2.0 * self.lambda()) - self.free_energy(theta, q)?)
    }

    /// The same bound minus `log Z*`, evaluated without cancellation.
    pub fn log_z_upper_bound_slack(&self, theta: &DVector<f64>, q: &GaussianMeasure) -> Result<f64> {
        Ok(self.fisher_info(theta, q)? / (2.0 * self.lambda()) - self.excess_free_energy(theta, q)?)
    }
}

/// One state of a [`GaussianSweep`].
#[derive(Debug, Clone)]
pub struct SweepState {
    pub id: u64,
    pub theta: DVector<f64>,
    pub q: GaussianMeasure,
}

/// Reproducible random `(θ, q)` states: θ and the mean uniform in `[−3, 3]`,
/// covariance `AAᵀ + 0.1 I` with `A` uniform in `[−1, 1]`.
///
/// State `i` depends only on `(seed, i)`, so sweeps can be split freely.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSweep {
    pub seed: u64,
    pub dim_theta: usize,
    pub dim_x: usize,
}

impl GaussianSweep {
    pub const DEFAULT_SEED: u64 = 20_240_601;

    pub fn new(seed: u64, dim_theta: usize, dim_x: usize) -> Self {
        Self { seed, dim_theta, dim_x }
    }

    pub fn for_model(model: &AnalyticModel, seed: u64) -> Self {
        Self::new(seed, model.dim_theta(), model.dim_x())
    }

    pub fn state(&self, id: u64) -> SweepState {
        let mut rng = NoiseStream::new(self.seed, Purpose::Sweep, 0, id);
        let theta = DVector::from_fn(self.dim_theta, |_, _| rng.gen_range(-3.0..=3.0));
        let mean = DVector::from_fn(self.dim_x, |_, _| rng.gen_range(-3.0..=3.0));
        let a = DMatrix::from_fn(self.dim_x, self.dim_x, |_, _| rng.gen_range(-1.0..=1.0));
        let cov = &a * a.transpose() + DMatrix::identity(self.dim_x, self.dim_x) * 0.1;
        let q = GaussianMeasure::new(mean, crate::linalg::symmetrize(&cov))
            .expect("AAᵀ + 0.1 I is positive definite");
        SweepState { id, theta, q }
    }

    pub fn states(&self, count: u64) -> impl Iterator<Item = SweepState> + '_ {
        (0..count).map(move |i| self.state(i))
    }
}
