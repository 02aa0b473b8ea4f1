use nalgebra::DVector;

use super::analytic::AnalyticModel;
use super::measure::{w2_squared_moments, GaussianMeasure};
use crate::error::{check_dim, Error, Result};

/// Initial law the error bound is evaluated for.
#[derive(Debug, Clone)]
pub enum BoundInit {
    /// Parameter and every particle at the maximizer of `ℓ`. `d₀` is then
    /// replaced by its a-priori bound `2√(d_x/λ)`.
    WarmStart,
    /// `θ₀` fixed, particles i.i.d. from `q₀`.
    Gaussian { theta: DVector<f64>, q: GaussianMeasure },
    /// `θ₀` fixed, every particle at `x₀`.
    Point { theta: DVector<f64>, x: DVector<f64> },
}

/// Constants and terms of the non-asymptotic PGD error bound
/// `E‖θ_K − θ*‖ ≤ √h·A + (L√2/(λ√N))√(B₀ + 2d_x/λ) + d₀ e^{−hλK}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundTerms {
    pub lambda: f64,
    pub lipschitz: f64,
    pub iota: f64,
    pub b0: f64,
    pub a0h: f64,
    pub dx: f64,
    pub d0: f64,
    pub h: f64,
    pub n: usize,
    pub k: u64,
    /// `√h · A_{0,h}`.
    pub step_term: f64,
    /// `(L√2/(λ√N)) √(B₀ + 2d_x/λ)`.
    pub particle_term: f64,
    /// `d₀ e^{−hλK}`.
    pub contraction_term: f64,
    pub rhs: f64,
}

impl BoundTerms {
    /// Uniform-in-time second-moment bound `2(B₀ + 2d_x/λ)` for the centered model.
    pub fn moment_bound(&self) -> f64 {
        2.0 * (self.b0 + 2.0 * self.dx / self.lambda)
    }
}

/// `A_{0,h}` as a function of the constants.
pub fn a0h(h: f64, lambda: f64, lipschitz: f64, b0: f64, dx: f64) -> f64 {
    let iota = 2.0 * lipschitz * lambda / (lipschitz + lambda);
    let l2 = lipschitz * lipschitz;
    ((4.0 * h + 4.0 / iota) / iota * 220.0 * l2 * (l2 * h * (b0 + 2.0 * dx / lambda) + dx)).sqrt()
}

/// Evaluates every constant of the bound for `K` steps of size `h` with `N`
/// particles. `B₀` is taken about the maximizer of `ℓ`, i.e. in the
/// coordinates where it sits at the origin.
pub fn bound_terms(model: &AnalyticModel, h: f64, n: usize, k: u64, init: &BoundInit) -> Result<BoundTerms> {
    let c = model.constants();
    let (lambda, lipschitz) = (c.lambda, c.lipschitz);
    if !(h > 0.0) {
        return Err(Error::Config(format!("step size must be positive, got {h}")));
    }
    if n == 0 {
        return Err(Error::Config("need at least one particle".into()));
    }
    let h_max = 1.0 / (lambda + lipschitz);
    if h > h_max {
        return Err(Error::Precondition(format!("step size {h} exceeds 1/(λ+L) = {h_max}")));
    }
    let (theta_dag, x_dag) = model.model().maximizer()?;
    let (theta_dag, x_dag) = (DVector::from_vec(theta_dag), DVector::from_vec(x_dag));
    let dx = model.dim_x() as f64;
    let (b0, d0) = match init {
        BoundInit::WarmStart => (0.0, 2.0 * (dx / lambda).sqrt()),
        BoundInit::Gaussian { theta, q } => {
            let b0 = (theta - &theta_dag).norm_squared() + (q.mean() - &x_dag).norm_squared() + q.cov().trace();
            (b0, model.distance_to_optimum(theta, q)?)
        }
        BoundInit::Point { theta, x } => {
            check_dim("theta", model.dim_theta(), theta.len())?;
            check_dim("x", model.dim_x(), x.len())?;
            let b0 = (theta - &theta_dag).norm_squared() + (x - &x_dag).norm_squared();
            let zero = nalgebra::DMatrix::zeros(x.len(), x.len());
            let star = model.posterior_star();
            let w2 = w2_squared_moments(x, &zero, star.mean(), star.cov())?;
            (b0, ((theta - model.theta_star()).norm_squared() + w2).sqrt())
        }
    };
    let iota = 2.0 * lipschitz * lambda / (lipschitz + lambda);
    let a = a0h(h, lambda, lipschitz, b0, dx);
    let step_term = h.sqrt() * a;
    let particle_term = lipschitz * 2f64.sqrt() / (lambda * (n as f64).sqrt()) * (b0 + 2.0 * dx / lambda).sqrt();
    let contraction_term = d0 * (-h * lambda * k as f64).exp();
    Ok(BoundTerms {
        lambda,
        lipschitz,
        iota,
        b0,
        a0h: a,
        dx,
        d0,
        h,
        n,
        k,
        step_term,
        particle_term,
        contraction_term,
        rhs: step_term + particle_term + contraction_term,
    })
}
