//! Closed-form calculus for quadratic models and Gaussian `q`.
//!
//! For a quadratic log-likelihood the free-energy gradient flow maps Gaussians
//! to Gaussians, so `(θ_t, q_t)` is captured exactly by the parameter, the
//! latent mean and the latent covariance. Everything here (free energy,
//! extended Fisher information, the metric `d`, the functional inequalities
//! and the discretization bound constants) is evaluated in closed form on that
//! representation.

mod analytic;
mod bounds;
mod flow;
mod inequalities;
mod measure;

pub use analytic::AnalyticModel;
pub use bounds::{a0h, bound_terms, BoundInit, BoundTerms};
pub use flow::{FlowDerivative, FlowState};
pub use inequalities::{GaussianSweep, SweepState, NEAR_OPTIMAL_GAP};
pub use measure::{bures_squared, d_metric, w2_gaussian, w2_squared_moments, GaussianMeasure};
