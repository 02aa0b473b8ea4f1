use nalgebra::{DMatrix, DVector};

use super::{eigen_constants, ConcavityConstants, LatentModel, Optimum};
use crate::calculus::GaussianMeasure;
use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky, is_symmetric, log_det_spd, symmetrize};

/// `ℓ(z) = ½ zᵀHz + bᵀz + c` with `z = (θ, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    d_theta: usize,
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
    // Row-major copy of `hessian` for the sampler's inner loop.
    h_rows: Vec<f64>,
}

impl QuadraticModel {
    /// Only symmetry and shapes are validated here; strong concavity is
    /// checked by the operations that need it.
    pub fn new(d_theta: usize, hessian: DMatrix<f64>, linear: DVector<f64>, constant: f64) -> Result<Self> {
        let d = hessian.nrows();
        if !hessian.is_square() {
            return Err(Error::Config("Hessian must be square".into()));
        }
        check_dim("linear term", d, linear.len())?;
        if d_theta == 0 || d_theta >= d {
            return Err(Error::Config(format!(
                "need 1 <= d_theta < {d} (joint dimension), got {d_theta}"
            )));
        }
        if !is_symmetric(&hessian, 1e-12) {
            return Err(Error::Config("Hessian is not symmetric".into()));
        }
        if hessian.iter().chain(linear.iter()).any(|v| !v.is_finite()) || !constant.is_finite() {
            return Err(Error::Config("non-finite model coefficients".into()));
        }
        let hessian = symmetrize(&hessian);
        let h_rows = (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|(i, j)| hessian[(i, j)]).collect();
        Ok(Self { d_theta, hessian, linear, constant, h_rows })
    }

    /// `x ~ N(θ, 1)`, `y | x ~ N(x, 1)` with a single observation `y`, with
    /// the additive constant dropped: `ℓ = −(y−x)²/2 − (x−θ)²/2`.
    pub fn toy_1d(y: f64) -> Self {
        Self::new(
            1,
            DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -2.0]),
            DVector::from_column_slice(&[0.0, y]),
            -0.5 * y * y,
        )
        .expect("toy model is well formed")
    }

    /// The toy model with its Gaussian normalizing constants, so that
    /// `ℓ = log p_θ(x, y)` exactly.
    pub fn toy_1d_normalized(y: f64) -> Self {
        let mut m = Self::toy_1d(y);
        m.constant -= (2.0 * std::f64::consts::PI).ln();
        m
    }

    /// A fixed three-dimensional example (`d_θ = 1`, `d_x = 2`) with a
    /// non-diagonal, well-conditioned Hessian.
    pub fn example_3d() -> Self {
        let neg_h = DMatrix::from_row_slice(3, 3, &[2.0, -0.5, 0.3, -0.5, 1.5, -0.4, 0.3, -0.4, 1.0]);
        Self::new(1, -neg_h, DVector::from_column_slice(&[0.5, -1.0, 0.8]), 0.0).expect("well formed")
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn joint_dim(&self) -> usize {
        self.hessian.nrows()
    }

    /// Returns a copy with every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.d_theta, &self.hessian * factor, &self.linear * factor, self.constant * factor)
    }

    pub fn concavity_constants(&self) -> Result<ConcavityConstants> {
        eigen_constants(&(-&self.hessian))
    }

    /// Unique maximizer `z† = −H⁻¹b`, split into `(θ†, x†)`.
    pub fn maximizer(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let z = self.maximizer_joint()?;
        Ok((z.rows(0, self.d_theta).iter().copied().collect(), z.rows(self.d_theta, self.dim_x()).iter().copied().collect()))
    }

    fn maximizer_joint(&self) -> Result<DVector<f64>> {
        let neg_h = -&self.hessian;
        let chol = cholesky(&neg_h)
            .map_err(|_| Error::NotStronglyConcave("-H is not positive definite".into()))?;
        Ok(chol.solve(&self.linear))
    }

    /// Translates the model so its maximizer sits at the origin and its maximum
    /// value is zero. The Hessian is unchanged.
    pub fn shift_to_origin(&self) -> Result<Self> {
        self.maximizer_joint()?;
        Self::new(self.d_theta, self.hessian.clone(), DVector::zeros(self.joint_dim()), 0.0)
    }

    pub fn is_centered(&self) -> bool {
        self.linear.iter().all(|&v| v == 0.0)
    }

    pub(crate) fn blocks(&self) -> QuadraticBlocks {
        let (p, d) = (self.d_theta, self.dim_x());
        QuadraticBlocks {
            h_tt: self.hessian.view((0, 0), (p, p)).into_owned(),
            h_tx: self.hessian.view((0, p), (p, d)).into_owned(),
            h_xx: self.hessian.view((p, p), (d, d)).into_owned(),
            b_t: self.linear.rows(0, p).into_owned(),
            b_x: self.linear.rows(p, d).into_owned(),
        }
    }

    /// `θ*` and `π_θ*` from the partitioned quadratic form.
    pub fn analytic_optimum(&self) -> Result<Optimum> {
        self.concavity_constants()?;
        let blk = self.blocks();
        let precision = -&blk.h_xx;
        let chol = cholesky(&precision)
            .map_err(|_| Error::DegenerateModel("conditional covariance is singular".into()))?;
        // The marginal maximizer of a Gaussian coincides with the θ-block of the joint mode.
        let z = self.maximizer_joint()?;
        let theta = z.rows(0, self.d_theta).into_owned();
        let post = self.posterior_with(&blk, &chol, &theta)?;
        let log_z = self.log_marginal_with(&blk, &chol, &theta);
        Ok(Optimum { theta, posterior: post, log_z })
    }

    /// Posterior `π_θ = N(A⁻¹(H_xθ θ + b_x), A⁻¹)` with `A = −H_xx`.
    pub fn posterior(&self, theta: &DVector<f64>) -> Result<GaussianMeasure> {
        let blk = self.blocks();
        let chol = cholesky(&(-&blk.h_xx))
            .map_err(|_| Error::DegenerateModel("conditional covariance is singular".into()))?;
        self.posterior_with(&blk, &chol, theta)
    }

    fn posterior_with(
        &self,
        blk: &QuadraticBlocks,
        chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
        theta: &DVector<f64>,
    ) -> Result<GaussianMeasure> {
        let g = blk.h_tx.transpose() * theta + &blk.b_x;
        let mean = chol.solve(&g);
        let cov = symmetrize(&chol.inverse());
        GaussianMeasure::new(mean, cov)
    }

    /// `log Z_θ = log ∫ exp ℓ(θ, x) dx`.
    pub fn log_marginal(&self, theta: &DVector<f64>) -> Result<f64> {
        let blk = self.blocks();
        let chol = cholesky(&(-&blk.h_xx))
            .map_err(|_| Error::DegenerateModel("conditional covariance is singular".into()))?;
        Ok(self.log_marginal_with(&blk, &chol, theta))
    }

    fn log_marginal_with(
        &self,
        blk: &QuadraticBlocks,
        chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
        theta: &DVector<f64>,
    ) -> f64 {
        let d = self.dim_x() as f64;
        let g = blk.h_tx.transpose() * theta + &blk.b_x;
        let quad = g.dot(&chol.solve(&g));
        0.5 * quad + 0.5 * d * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det_spd(chol)
            + 0.5 * theta.dot(&(&blk.h_tt * theta))
            + blk.b_t.dot(theta)
            + self.constant
    }
}

/// Partition of `H` and `b` into parameter and latent blocks.
#[derive(Debug, Clone)]
pub(crate) struct QuadraticBlocks {
    pub h_tt: DMatrix<f64>,
    pub h_tx: DMatrix<f64>,
    pub h_xx: DMatrix<f64>,
    pub b_t: DVector<f64>,
    pub b_x: DVector<f64>,
}

impl LatentModel for QuadraticModel {
    fn kind(&self) -> &'static str {
        "quadratic"
    }

    fn dim_theta(&self) -> usize {
        self.d_theta
    }

    fn dim_x(&self) -> usize {
        self.hessian.nrows() - self.d_theta
    }

    fn log_lik_unchecked(&self, theta: &[f64], x: &[f64]) -> f64 {
        let d = self.joint_dim();
        let z = |i: usize| if i < self.d_theta { theta[i] } else { x[i - self.d_theta] };
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..d {
            let zi = z(i);
            let row = &self.h_rows[i * d..(i + 1) * d];
            let mut hz = 0.0;
            for (j, hij) in row.iter().enumerate() {
                hz += hij * z(j);
            }
            quad += zi * hz;
            lin += self.linear[i] * zi;
        }
        0.5 * quad + lin + self.constant
    }

    #[inline]
    fn grad_unchecked(&self, theta: &[f64], x: &[f64], g_theta: &mut [f64], g_x: &mut [f64]) {
        let d = self.joint_dim();
        let p = self.d_theta;
        for i in 0..d {
            let row = &self.h_rows[i * d..(i + 1) * d];
            let mut acc = self.linear[i];
            for (hij, tj) in row[..p].iter().zip(theta) {
                acc += hij * tj;
            }
            for (hij, xj) in row[p..].iter().zip(x) {
                acc += hij * xj;
            }
            if i < p {
                g_theta[i] = acc;
            } else {
                g_x[i - p] = acc;
            }
        }
    }

    fn quadratic_form(&self) -> Option<QuadraticModel> {
        Some(self.clone())
    }

    fn maximizer(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        QuadraticModel::maximizer(self).ok()
    }
}
