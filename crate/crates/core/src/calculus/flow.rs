use nalgebra::{DMatrix, DVector};

use super::analytic::AnalyticModel;
use super::measure::GaussianMeasure;
use crate::error::{Error, Result};
use crate::linalg::symmetrize;

/// A point `(θ_t, q_t)` on the Gaussian-closed gradient flow.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub theta: DVector<f64>,
    pub q: GaussianMeasure,
    pub t: f64,
}

impl FlowState {
    pub fn new(theta: DVector<f64>, q: GaussianMeasure) -> Self {
        Self { theta, q, t: 0.0 }
    }
}

/// Time derivative of `(θ, mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowDerivative {
    pub theta: DVector<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

struct Raw {
    theta: DVector<f64>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Raw {
    fn axpy(&self, h: f64, d: &FlowDerivative) -> Raw {
        Raw {
            theta: &self.theta + &d.theta * h,
            mean: &self.mean + &d.mean * h,
            cov: &self.cov + &d.cov * h,
        }
    }
}

impl AnalyticModel {
    fn rhs_raw(&self, theta: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> FlowDerivative {
        let b = &self.blocks;
        let hc = &b.h_xx * cov;
        let n = cov.nrows();
        FlowDerivative {
            theta: &b.h_tt * theta + &b.h_tx * mean + &b.b_t,
            mean: b.h_tx.transpose() * theta + &b.h_xx * mean + &b.b_x,
            cov: &hc + hc.transpose() + DMatrix::identity(n, n) * 2.0,
        }
    }

    /// Moment ODE right-hand side: `θ' = ∇_θℓ(θ, m)`, `m' = ∇_xℓ(θ, m)`,
    /// `Σ' = H_xx Σ + Σ H_xx + 2I`.
    pub fn flow_rhs(&self, state: &FlowState) -> Result<FlowDerivative> {
        self.check(&state.theta, &state.q)?;
        Ok(self.rhs_raw(&state.theta, state.q.mean(), state.q.cov()))
    }

    /// Classic RK4 from `init` to `init.t + t_end`. The step is shrunk to
    /// `t_end / ceil(t_end / dt)` so the grid is uniform and hits `t_end`.
    /// Every step is returned, starting with `init`.
    pub fn integrate_flow(&self, init: &FlowState, t_end: f64, dt: f64) -> Result<Vec<FlowState>> {
        self.check(&init.theta, &init.q)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive and finite, got {dt}")));
        }
        if !(t_end >= 0.0 && t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be non-negative and finite, got {t_end}")));
        }
        let mut out = vec![init.clone()];
        if t_end == 0.0 {
            return Ok(out);
        }
        let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
        let h = t_end / steps as f64;
        out.reserve(steps);
        let mut y = Raw { theta: init.theta.clone(), mean: init.q.mean().clone(), cov: init.q.cov().clone() };
        for i in 1..=steps {
            let k1 = self.rhs_raw(&y.theta, &y.mean, &y.cov);
            let y2 = y.axpy(0.5 * h, &k1);
            let k2 = self.rhs_raw(&y2.theta, &y2.mean, &y2.cov);
            let y3 = y.axpy(0.5 * h, &k2);
            let k3 = self.rhs_raw(&y3.theta, &y3.mean, &y3.cov);
            let y4 = y.axpy(h, &k3);
            let k4 = self.rhs_raw(&y4.theta, &y4.mean, &y4.cov);
            let w = h / 6.0;
            y.theta += (&k1.theta + &k2.theta * 2.0 + &k3.theta * 2.0 + &k4.theta) * w;
            y.mean += (&k1.mean + &k2.mean * 2.0 + &k3.mean * 2.0 + &k4.mean) * w;
            y.cov += (&k1.cov + &k2.cov * 2.0 + &k3.cov * 2.0 + &k4.cov) * w;
            y.cov = symmetrize(&y.cov);
            let t = init.t + i as f64 * h;
            let q = GaussianMeasure::new(y.mean.clone(), y.cov.clone()).map_err(|e| Error::IntegrationFailure {
                t,
                detail: format!("covariance left the SPD cone ({e}); retry with a smaller dt"),
            })?;
            if y.theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationFailure { t, detail: "non-finite parameter; retry with a smaller dt".into() });
            }
            out.push(FlowState { theta: y.theta.clone(), q, t });
        }
        Ok(out)
    }

    /// `|dF/dt + I| / max(1, I)` at interior points, with `dF/dt` from centered
    /// differences of `F − F*`.
    pub fn debruijn_residual(&self, traj: &[FlowState]) -> Result<Vec<f64>> {
        if traj.len() < 3 {
            return Err(Error::Precondition("de Bruijn residual needs at least 3 states".into()));
        }
        let f = traj
            .iter()
            .map(|s| self.excess_free_energy(&s.theta, &s.q))
            .collect::<Result<Vec<_>>>()?;
        (1..traj.len() - 1)
            .map(|i| {
                let dfdt = (f[i + 1] - f[i - 1]) / (traj[i + 1].t - traj[i - 1].t);
                let info = self.fisher_info(&traj[i].theta, &traj[i].q)?;
                Ok((dfdt + info).abs() / info.max(1.0))
            })
            .collect()
    }

    /// `d_t e^{λ(t − t₀)} − d₀` along a trajectory, `d` measured to `(θ*, π*)`.
    pub fn theorem9_excess(&self, traj: &[FlowState]) -> Result<Vec<f64>> {
        let Some(first) = traj.first() else { return Ok(Vec::new()) };
        let d0 = self.distance_to_optimum(&first.theta, &first.q)?;
        let lambda = self.lambda();
        traj.iter()
            .map(|s| Ok(self.distance_to_optimum(&s.theta, &s.q)? * (lambda * (s.t - first.t)).exp() - d0))
            .collect()
    }

    /// `(F_t − F*) e^{2λ(t − t₀)} − (F₀ − F*)` along a trajectory.
    pub fn theorem2_excess(&self, traj: &[FlowState]) -> Result<Vec<f64>> {
        let Some(first) = traj.first() else { return Ok(Vec::new()) };
        let g0 = self.excess_free_energy(&first.theta, &first.q)?;
        let lambda = self.lambda();
        traj.iter()
            .map(|s| Ok(self.excess_free_energy(&s.theta, &s.q)? * (2.0 * lambda * (s.t - first.t)).exp() - g0))
            .collect()
    }
}
