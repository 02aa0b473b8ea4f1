//! Latent variable models `ℓ(θ, x) = log p_θ(x, y)` and their gradients.

mod factorized;
mod logistic;
pub(crate) mod quadratic;
mod registry;

use nalgebra::DVector;

pub use factorized::FactorizedGaussianModel;
pub use logistic::LogisticModel;
pub use quadratic::QuadraticModel;
pub use registry::{ModelBuilder, ModelRegistry};

use crate::calculus::GaussianMeasure;
use crate::error::{check_dim, Error, Result};
use crate::linalg::jacobi_eigen;

/// A differentiable latent variable model.
///
/// Implementations are immutable after construction and are evaluated
/// concurrently by the samplers. The `*_unchecked` entry points assume slice
/// lengths match [`dim_theta`](Self::dim_theta) and [`dim_x`](Self::dim_x);
/// [`log_lik`] and [`grad`] are the checked wrappers.
pub trait LatentModel: Send + Sync + std::fmt::Debug {
    /// Registry name of the model family.
    fn kind(&self) -> &'static str;
    fn dim_theta(&self) -> usize;
    fn dim_x(&self) -> usize;
    fn log_lik_unchecked(&self, theta: &[f64], x: &[f64]) -> f64;
    /// Writes `∇_θℓ(θ, x)` into `g_theta` and `∇_xℓ(θ, x)` into `g_x`.
    fn grad_unchecked(&self, theta: &[f64], x: &[f64], g_theta: &mut [f64], g_x: &mut [f64]);

    /// The model as an explicit quadratic form, when it is one.
    fn quadratic_form(&self) -> Option<QuadraticModel> {
        None
    }

    /// Maximizer `(θ†, x†)` of `ℓ`, when known in closed form.
    fn maximizer(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        self.quadratic_form().and_then(|q| q.maximizer().ok())
    }
}

pub fn log_lik(model: &dyn LatentModel, theta: &[f64], x: &[f64]) -> Result<f64> {
    check_dim("theta", model.dim_theta(), theta.len())?;
    check_dim("x", model.dim_x(), x.len())?;
    Ok(model.log_lik_unchecked(theta, x))
}

/// Returns `(∇_θℓ, ∇_xℓ)`.
pub fn grad(model: &dyn LatentModel, theta: &[f64], x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_dim("theta", model.dim_theta(), theta.len())?;
    check_dim("x", model.dim_x(), x.len())?;
    let mut gt = vec![0.0; model.dim_theta()];
    let mut gx = vec![0.0; model.dim_x()];
    model.grad_unchecked(theta, x, &mut gt, &mut gx);
    Ok((gt, gx))
}

/// Strong-concavity constant `λ` and gradient Lipschitz constant `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConcavityConstants {
    pub lambda: f64,
    pub lipschitz: f64,
}

impl ConcavityConstants {
    /// Largest step size covered by the error bounds, `1/(λ+L)`.
    pub fn max_step(&self) -> f64 {
        1.0 / (self.lambda + self.lipschitz)
    }
}

/// Extreme eigenvalues of `−H` for models with a quadratic form.
pub fn concavity_constants(model: &dyn LatentModel) -> Result<ConcavityConstants> {
    let q = model.quadratic_form().ok_or_else(|| {
        Error::Unsupported(format!(
            "concavity constants need a quadratic model, got `{}`",
            model.kind()
        ))
    })?;
    q.concavity_constants()
}

/// `θ*` maximizing the marginal likelihood and the posterior `π_θ*`.
#[derive(Debug, Clone)]
pub struct Optimum {
    pub theta: DVector<f64>,
    pub posterior: GaussianMeasure,
    /// `log Z_θ*`, the maximal log marginal likelihood.
    pub log_z: f64,
}

pub fn analytic_optimum(model: &dyn LatentModel) -> Result<Optimum> {
    let q = model.quadratic_form().ok_or_else(|| {
        Error::Unsupported(format!(
            "no analytic optimum for model kind `{}`",
            model.kind()
        ))
    })?;
    q.analytic_optimum()
}

pub(crate) fn eigen_constants(neg_hessian: &nalgebra::DMatrix<f64>) -> Result<ConcavityConstants> {
    let eig = jacobi_eigen(neg_hessian)?;
    let (lambda, lipschitz) = (eig.min(), eig.max());
    if lambda <= 0.0 {
        return Err(Error::NotStronglyConcave(format!(
            "smallest eigenvalue of -H is {lambda:e}"
        )));
    }
    Ok(ConcavityConstants { lambda, lipschitz })
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Centered finite-difference gradient of `log_lik`.
    pub fn fd_grad(model: &dyn LatentModel, theta: &[f64], x: &[f64], step: f64) -> (Vec<f64>, Vec<f64>) {
        let f = |t: &[f64], y: &[f64]| model.log_lik_unchecked(t, y);
        let mut gt = vec![0.0; theta.len()];
        for i in 0..theta.len() {
            let (mut p, mut m) = (theta.to_vec(), theta.to_vec());
            p[i] += step;
            m[i] -= step;
            gt[i] = (f(&p, x) - f(&m, x)) / (2.0 * step);
        }
        let mut gx = vec![0.0; x.len()];
        for i in 0..x.len() {
            let (mut p, mut m) = (x.to_vec(), x.to_vec());
            p[i] += step;
            m[i] -= step;
            gx[i] = (f(theta, &p) - f(theta, &m)) / (2.0 * step);
        }
        (gt, gx)
    }

    pub fn assert_grad_matches_fd(model: &dyn LatentModel, theta: &[f64], x: &[f64]) {
        let (gt, gx) = grad(model, theta, x).unwrap();
        let (ft, fx) = fd_grad(model, theta, x, 1e-5);
        let analytic: Vec<f64> = gt.iter().chain(&gx).copied().collect();
        let numeric: Vec<f64> = ft.iter().chain(&fx).copied().collect();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(
            diff <= 1e-5 * norm.max(1.0),
            "gradient mismatch: analytic {analytic:?} vs finite differences {numeric:?}"
        );
    }
}
