use nalgebra::{DMatrix, DVector};

use super::measure::{w2_gaussian, GaussianMeasure};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky, jacobi_eigen};
use crate::model::quadratic::QuadraticBlocks;
use crate::model::{ConcavityConstants, LatentModel, Optimum, QuadraticModel};

/// A strongly concave quadratic model with everything the closed-form layer
/// needs precomputed: partitioned blocks, conditional precision, the Schur
/// complement governing `log Z_θ`, `(λ, L)`, `(θ*, π*)` and `F*`.
#[derive(Debug, Clone)]
pub struct AnalyticModel {
    model: QuadraticModel,
    pub(crate) blocks: QuadraticBlocks,
    /// `A = −H_xx`, the conditional precision of `x` given `θ`.
    precision: DMatrix<f64>,
    precision_chol_l: DMatrix<f64>,
    /// `−∇²_θ log Z_θ = −(H_θθ + H_θx A⁻¹ H_xθ)`.
    neg_schur: DMatrix<f64>,
    constants: ConcavityConstants,
    optimum: Optimum,
}

impl AnalyticModel {
    pub fn new(model: &QuadraticModel) -> Result<Self> {
        let constants = model.concavity_constants()?;
        let optimum = model.analytic_optimum()?;
        let blocks = model.blocks();
        let precision = -&blocks.h_xx;
        let chol = cholesky(&precision)?;
        let precision_chol_l = chol.l();
        let neg_schur = -(&blocks.h_tt + &blocks.h_tx * chol.solve(&blocks.h_tx.transpose()));
        Ok(Self {
            model: model.clone(),
            blocks,
            precision,
            precision_chol_l,
            neg_schur,
            constants,
            optimum,
        })
    }

    pub fn from_model(model: &dyn LatentModel) -> Result<Self> {
        let q = model.quadratic_form().ok_or_else(|| {
            Error::Unsupported(format!(
                "closed-form calculus needs a quadratic model, got `{}`",
                model.kind()
            ))
        })?;
        Self::new(&q)
    }

    pub fn model(&self) -> &QuadraticModel {
        &self.model
    }

    pub fn constants(&self) -> ConcavityConstants {
        self.constants
    }

    pub fn lambda(&self) -> f64 {
        self.constants.lambda
    }

    pub fn optimum(&self) -> &Optimum {
        &self.optimum
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.optimum.theta
    }

    pub fn posterior_star(&self) -> &GaussianMeasure {
        &self.optimum.posterior
    }

    /// `F* = −log Z*`.
    pub fn f_star(&self) -> f64 {
        -self.optimum.log_z
    }

    pub fn dim_theta(&self) -> usize {
        self.model.dim_theta()
    }

    pub fn dim_x(&self) -> usize {
        self.model.dim_x()
    }

    pub(crate) fn check(&self, theta: &DVector<f64>, q: &GaussianMeasure) -> Result<()> {
        check_dim("theta", self.dim_theta(), theta.len())?;
        check_dim("q", self.dim_x(), q.dim())
    }

    pub fn log_marginal(&self, theta: &DVector<f64>) -> Result<f64> {
        self.model.log_marginal(theta)
    }

    pub fn posterior(&self, theta: &DVector<f64>) -> Result<GaussianMeasure> {
        self.model.posterior(theta)
    }

    /// `∇_θ log Z_θ`, which by Fisher's identity equals `∫∇_θℓ(θ, x) π_θ(dx)`.
    pub fn grad_log_marginal(&self, theta: &DVector<f64>) -> DVector<f64> {
        -(&self.neg_schur * (theta - self.theta_star()))
    }

    /// `KL(q ‖ π_θ)`, evaluated from the eigenvalues of `A^½ Σ A^½` so that it
    /// stays accurate as `q → π_θ`.
    pub fn kl_to_posterior(&self, theta: &DVector<f64>, q: &GaussianMeasure) -> Result<f64> {
        self.check(theta, q)?;
        let post = self.posterior(theta)?;
        let delta = q.mean() - post.mean();
        let mahalanobis = delta.dot(&(&self.precision * &delta));
        let whitened = self.precision_chol_l.transpose() * q.cov() * &self.precision_chol_l;
        let eig = jacobi_eigen(&whitened)?;
        let spread: f64 = eig
            .values
            .iter()
            .map(|&ev| {
                let u = ev - 1.0;
                u - u.ln_1p()
            })
            .sum();
        Ok(0.5 * (spread + mahalanobis))
    }

    /// Free energy `F(θ, q) = KL(q ‖ π_θ) − log Z_θ`.
    pub fn free_energy(&self, theta: &DVector<f64>, q: &GaussianMeasure) -> Result<f64> {
        Ok(self.kl_to_posterior(theta, q)? - self.log_marginal(theta)?)
    }

    /// `F(θ, q) − F*`, using `log Z* − log Z_θ = ½(θ−θ*)ᵀ(−S)(θ−θ*)` so no
    /// large terms cancel.
    pub fn excess_free_energy(&self, theta: &DVector<f64>, q: &GaussianMeasure) -> Result<f64> {
        let dt = theta - self.theta_star();
        let marginal_gap = 0.5 * dt.dot(&(&self.neg_schur * &dt));
        Ok(self.kl_to_posterior(theta, q)? + marginal_gap)
    }

    /// Extended Fisher information
    /// `I(θ, q) = ‖∫∇_θℓ dq‖² + ∫‖∇_x log(q/ρ_θ)‖² dq`.
    ///
    /// Both integrands are affine in `x`: `∇_x log(q/ρ_θ)(x) = −B(x−m) − r`
    /// with `B = Σ⁻¹ + H_xx` and `r = ∇_xℓ(θ, m)`, so the second term is
    /// `‖r‖² + tr(BΣB)`.
    pub fn fisher_info(&self, theta: &DVector<f64>, q: &GaussianMeasure) -> Result<f64> {
        self.check(theta, q)?;
        let blk = &self.blocks;
        let m = q.mean();
        let g_theta = &blk.h_tt * theta + &blk.h_tx * m + &blk.b_t;
        let r = blk.h_tx.transpose() * theta + &blk.h_xx * m + &blk.b_x;
        let cov_inv = cholesky(q.cov())?.inverse();
        let b = cov_inv + &blk.h_xx;
        let spread = (&b * q.chol()).norm_squared();
        Ok(g_theta.norm_squared() + r.norm_squared() + spread)
    }

    /// `d((θ, q), (θ*, π*))`.
    pub fn distance_to_optimum(&self, theta: &DVector<f64>, q: &GaussianMeasure) -> Result<f64> {
        self.check(theta, q)?;
        let w = w2_gaussian(q, self.posterior_star())?;
        Ok(((theta - self.theta_star()).norm_squared() + w * w).sqrt())
    }

    /// Inverse of the conditional precision, `Cov(x | θ)`.
    pub fn conditional_cov(&self) -> DMatrix<f64> {
        self.posterior_star().cov().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{NoiseStream, Purpose};

    fn toy() -> AnalyticModel {
        AnalyticModel::new(&QuadraticModel::toy_1d_normalized(1.0)).unwrap()
    }

    fn g1(mean: f64, var: f64) -> GaussianMeasure {
        GaussianMeasure::from_slices(&[mean], &[var]).unwrap()
    }

    fn th(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    /// Entropy route: `F = −H(q) − E_q ℓ(θ, X)` with
    /// `E_q ℓ = ℓ(θ, m) + ½ tr(H_xx Σ)`.
    fn free_energy_entropy_route(a: &AnalyticModel, theta: &DVector<f64>, q: &GaussianMeasure) -> f64 {
        let d = q.dim() as f64;
        let log_det = crate::linalg::log_det_spd(&cholesky(q.cov()).unwrap());
        let entropy = 0.5 * (d * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + log_det);
        let m: Vec<f64> = q.mean().iter().copied().collect();
        let t: Vec<f64> = theta.iter().copied().collect();
        let e_ell = a.model().log_lik_unchecked(&t, &m) + 0.5 * (&a.blocks.h_xx * q.cov()).trace();
        -entropy - e_ell
    }

    #[test]
    fn optimal_free_energy_of_normalized_toy() {
        let a = toy();
        let f = a.free_energy(a.theta_star(), a.posterior_star()).unwrap();
        let expected = 0.5 * (4.0 * std::f64::consts::PI).ln();
        assert!((f - expected).abs() < 1e-14);
        assert!((a.f_star() - expected).abs() < 1e-14);
    }

    #[test]
    fn toy_free_energy_along_posterior_slice() {
        // Oracle: 1D trapezoid quadrature of ∫ q log(q / p_θ(x, y)) dx.
        let a = toy();
        for theta in [-1.0, 0.0, 0.5, 2.5] {
            let q = a.posterior(&th(theta)).unwrap();
            let (lo, hi, n) = (-15.0, 15.0, 30_000);
            let dx = (hi - lo) / n as f64;
            let quad: f64 = (0..=n)
                .map(|i| {
                    let x = lo + i as f64 * dx;
                    let lq = q.log_density(&[x]);
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * lq.exp() * (lq - a.model().log_lik_unchecked(&[theta], &[x]))
                })
                .sum::<f64>()
                * dx;
            let f = a.free_energy(&th(theta), &q).unwrap();
            assert!((f - quad).abs() < 1e-8, "theta={theta}: {f} vs {quad}");
            let gap = (1.0 - theta) * (1.0 - theta) / 4.0;
            assert!((f - a.f_star() - gap).abs() < 1e-13);
            assert!((a.excess_free_energy(&th(theta), &q).unwrap() - gap).abs() < 1e-14);
        }
    }

    #[test]
    fn kl_route_matches_entropy_route() {
        for m in [QuadraticModel::toy_1d(0.3), QuadraticModel::example_3d()] {
            let a = AnalyticModel::new(&m).unwrap();
            let d = a.dim_x();
            for (i, q) in (0..20)
                .map(|i| {
                    let mut s = NoiseStream::new(1, Purpose::Sweep, 0, i);
                    let mean: Vec<f64> = (0..d).map(|_| s.normal()).collect();
                    let a: Vec<f64> = (0..d * d).map(|_| s.normal() * 0.5).collect();
                    let am = DMatrix::from_row_slice(d, d, &a);
                    GaussianMeasure::new(DVector::from_vec(mean), &am * am.transpose() + DMatrix::identity(d, d) * 0.2).unwrap()
                })
                .enumerate()
            {
                let theta = DVector::from_element(a.dim_theta(), i as f64 * 0.3 - 2.0);
                let f = a.free_energy(&theta, &q).unwrap();
                let g = free_energy_entropy_route(&a, &theta, &q);
                assert!((f - g).abs() < 1e-11 * (1.0 + f.abs()));
                let ex = a.excess_free_energy(&theta, &q).unwrap();
                assert!((ex - (f - a.f_star())).abs() < 1e-11 * (1.0 + f.abs()));
                assert!(ex >= 0.0);
            }
        }
    }

    #[test]
    fn fisher_info_vanishes_only_at_optimum() {
        let a = toy();
        assert!(a.fisher_info(a.theta_star(), a.posterior_star()).unwrap() < 1e-28);
        assert!(a.fisher_info(&th(1.0), &g1(1.0, 0.6)).unwrap() > 0.0);
        assert!(a.fisher_info(&th(1.1), a.posterior_star()).unwrap() > 0.0);
    }

    #[test]
    fn fisher_info_on_posterior_slice_is_squared_marginal_gradient() {
        let a = toy();
        for theta in [-2.0, 0.0, 0.7, 3.0] {
            let q = a.posterior(&th(theta)).unwrap();
            let i = a.fisher_info(&th(theta), &q).unwrap();
            let expected = (1.0 - theta) * (1.0 - theta) / 4.0;
            assert!((i - expected).abs() < 1e-13);
            let gl = a.grad_log_marginal(&th(theta));
            assert!((gl[0] - (1.0 - theta) / 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn free_energy_never_below_optimum() {
        let a = AnalyticModel::new(&QuadraticModel::example_3d()).unwrap();
        for i in 0..200 {
            let mut s = NoiseStream::new(2, Purpose::Sweep, 0, i);
            let theta = DVector::from_element(1, 3.0 * s.normal());
            let q = GaussianMeasure::new(
                DVector::from_vec(vec![s.normal(), s.normal()]),
                DMatrix::from_row_slice(2, 2, &[1.0 + s.normal().abs(), 0.1, 0.1, 0.3 + s.normal().abs()]),
            )
            .unwrap();
            assert!(a.free_energy(&theta, &q).unwrap() >= a.f_star());
        }
    }

    #[test]
    fn closed_forms_match_monte_carlo() {
        // Oracle: plain Monte Carlo of ∫ q log(q/p) and of the Fisher integrand
        // with 10⁶ draws per state; agreement within 4 standard errors.
        use crate::calculus::GaussianSweep;
        let n = 1_000_000usize;
        for (mi, m) in [QuadraticModel::toy_1d(1.0), QuadraticModel::example_3d()].iter().enumerate() {
            let a = AnalyticModel::new(m).unwrap();
            let (dt, dx) = (a.dim_theta(), a.dim_x());
            for st in GaussianSweep::for_model(&a, 99 + mi as u64).states(25) {
                let t: Vec<f64> = st.theta.iter().copied().collect();
                let prec = cholesky(st.q.cov()).unwrap().inverse();
                let mut stream = NoiseStream::new(17, Purpose::Reference, mi as u64, st.id);
                let mut x = vec![0.0; dx];
                let (mut gt, mut gx) = (vec![0.0; dt], vec![0.0; dx]);
                let mut f_vals = Vec::with_capacity(n);
                let mut g_sum = vec![0.0; dt];
                let mut g_vals = Vec::with_capacity(n * dt);
                let mut s_vals = Vec::with_capacity(n);
                for _ in 0..n {
                    st.q.sample_into(&mut stream, &mut x);
                    f_vals.push(st.q.log_density(&x) - a.model().log_lik_unchecked(&t, &x));
                    a.model().grad_unchecked(&t, &x, &mut gt, &mut gx);
                    for j in 0..dt {
                        g_sum[j] += gt[j];
                    }
                    g_vals.extend_from_slice(&gt);
                    let mut sq = 0.0;
                    for j in 0..dx {
                        let score: f64 = -(0..dx).map(|k| prec[(j, k)] * (x[k] - st.q.mean()[k])).sum::<f64>();
                        sq += (score - gx[j]).powi(2);
                    }
                    s_vals.push(sq);
                }
                let nf = n as f64;
                let mean_sd = |v: &[f64]| {
                    let mu = v.iter().sum::<f64>() / nf;
                    let var = v.iter().map(|u| (u - mu) * (u - mu)).sum::<f64>() / (nf - 1.0);
                    (mu, (var / nf).sqrt())
                };
                let (f_mc, f_se) = mean_sd(&f_vals);
                let f = a.free_energy(&st.theta, &st.q).unwrap();
                assert!((f - f_mc).abs() <= 4.0 * f_se + 1e-12, "F {f} vs {f_mc} ± {f_se}");

                let gbar: Vec<f64> = g_sum.iter().map(|v| v / nf).collect();
                let lin: Vec<f64> = (0..n)
                    .map(|i| {
                        let g = &g_vals[i * dt..(i + 1) * dt];
                        2.0 * g.iter().zip(&gbar).map(|(u, v)| u * v).sum::<f64>() + s_vals[i]
                    })
                    .collect();
                let (_, i_se) = mean_sd(&lin);
                let i_mc = gbar.iter().map(|v| v * v).sum::<f64>() + s_vals.iter().sum::<f64>() / nf;
                let info = a.fisher_info(&st.theta, &st.q).unwrap();
                assert!((info - i_mc).abs() <= 4.0 * i_se + 1e-12, "I {info} vs {i_mc} ± {i_se}");
            }
        }
    }
}
