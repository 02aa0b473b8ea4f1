use nalgebra::{DMatrix, DVector};

use super::{eigen_constants, ConcavityConstants, LatentModel, QuadraticModel};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{is_symmetric, symmetrize};

/// `ℓ(θ, x) = Σ_m ℓ̃(θ, x̃_m; ỹ_m)` with one latent block per datapoint and
/// quadratic per-datapoint terms
///
/// `ℓ̃(θ, x̃; ỹ) = ½ z̃ᵀH̃z̃ + (Gỹ)ᵀz̃ − ½ ỹᵀPỹ`, `z̃ = (θ, x̃)`.
///
/// The Hessian block `H̃` is shared by all datapoints; only the linear term
/// depends on the observation.
#[derive(Debug, Clone)]
pub struct FactorizedGaussianModel {
    d_theta: usize,
    block_dx: usize,
    obs_dim: usize,
    block_hessian: DMatrix<f64>,
    obs_map: DMatrix<f64>,
    obs_precision: DMatrix<f64>,
    observations: Vec<f64>,
    // Per-datapoint linear terms Gỹ_m, flattened, and the summed constant.
    linear_terms: Vec<f64>,
    constant: f64,
    h_rows: Vec<f64>,
}

impl FactorizedGaussianModel {
    pub fn new(
        d_theta: usize,
        block_hessian: DMatrix<f64>,
        obs_map: DMatrix<f64>,
        obs_precision: DMatrix<f64>,
        observations: Vec<f64>,
    ) -> Result<Self> {
        let k = block_hessian.nrows();
        if !block_hessian.is_square() || d_theta == 0 || d_theta >= k {
            return Err(Error::Config(format!(
                "block Hessian must be square with size > d_theta = {d_theta}"
            )));
        }
        if !is_symmetric(&block_hessian, 1e-12) {
            return Err(Error::Config("block Hessian is not symmetric".into()));
        }
        check_dim("observation map rows", k, obs_map.nrows())?;
        let obs_dim = obs_map.ncols();
        if obs_dim == 0 || observations.is_empty() || observations.len() % obs_dim != 0 {
            return Err(Error::Config(format!(
                "observations must be a non-empty flat array whose length is a multiple of {obs_dim}"
            )));
        }
        check_dim("observation precision", obs_dim, obs_precision.nrows())?;
        check_dim("observation precision", obs_dim, obs_precision.ncols())?;
        let block_hessian = symmetrize(&block_hessian);
        let m = observations.len() / obs_dim;
        let mut linear_terms = Vec::with_capacity(m * k);
        let mut constant = 0.0;
        for y in observations.chunks(obs_dim) {
            let y = DVector::from_column_slice(y);
            linear_terms.extend((&obs_map * &y).iter());
            constant -= 0.5 * y.dot(&(&obs_precision * &y));
        }
        let h_rows = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).map(|(i, j)| block_hessian[(i, j)]).collect();
        Ok(Self {
            d_theta,
            block_dx: k - d_theta,
            obs_dim,
            block_hessian,
            obs_map,
            obs_precision,
            observations,
            linear_terms,
            constant,
            h_rows,
        })
    }

    /// M copies of the scalar toy block: `ℓ̃ = −(ỹ−x̃)²/2 − (x̃−θ)²/2`.
    pub fn toy(observations: Vec<f64>) -> Result<Self> {
        Self::new(
            1,
            DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -2.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(1, 1),
            observations,
        )
    }

    pub fn num_datapoints(&self) -> usize {
        self.observations.len() / self.obs_dim
    }

    pub fn block_dx(&self) -> usize {
        self.block_dx
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// The same model restricted to the first `m` datapoints.
    pub fn truncated(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.num_datapoints() {
            return Err(Error::Config(format!(
                "cannot keep {m} of {} datapoints",
                self.num_datapoints()
            )));
        }
        Self::new(
            self.d_theta,
            self.block_hessian.clone(),
            self.obs_map.clone(),
            self.obs_precision.clone(),
            self.observations[..m * self.obs_dim].to_vec(),
        )
    }

    /// Constants `(λ̃, L̃)` of a single per-datapoint block.
    pub fn block_constants(&self) -> Result<ConcavityConstants> {
        eigen_constants(&(-&self.block_hessian))
    }

    /// Single-datapoint log-likelihood `ℓ̃(θ, x̃_m; ỹ_m)`.
    pub fn block_log_lik(&self, m: usize, theta: &[f64], x_block: &[f64]) -> f64 {
        let k = self.d_theta + self.block_dx;
        let z = |i: usize| if i < self.d_theta { theta[i] } else { x_block[i - self.d_theta] };
        let lin = &self.linear_terms[m * k..(m + 1) * k];
        let y = DVector::from_column_slice(&self.observations[m * self.obs_dim..(m + 1) * self.obs_dim]);
        let mut acc = -0.5 * y.dot(&(&self.obs_precision * &y));
        for i in 0..k {
            let mut hz = 0.0;
            for j in 0..k {
                hz += self.h_rows[i * k + j] * z(j);
            }
            acc += z(i) * (0.5 * hz + lin[i]);
        }
        acc
    }

    /// Dense joint quadratic form over `(θ, x̃_1, …, x̃_M)`.
    pub fn to_quadratic(&self) -> QuadraticModel {
        let (p, b) = (self.d_theta, self.block_dx);
        let m = self.num_datapoints();
        let k = p + b;
        let d = p + m * b;
        let mut h = DMatrix::zeros(d, d);
        let mut lin = DVector::zeros(d);
        for blk in 0..m {
            let off = p + blk * b;
            let idx = |i: usize| if i < p { i } else { off + i - p };
            for i in 0..k {
                for j in 0..k {
                    h[(idx(i), idx(j))] += self.block_hessian[(i, j)];
                }
                lin[idx(i)] += self.linear_terms[blk * k + i];
            }
        }
        QuadraticModel::new(p, h, lin, self.constant).expect("assembled from a valid block")
    }
}

impl LatentModel for FactorizedGaussianModel {
    fn kind(&self) -> &'static str {
        "factorized_gaussian"
    }

    fn dim_theta(&self) -> usize {
        self.d_theta
    }

    fn dim_x(&self) -> usize {
        self.num_datapoints() * self.block_dx
    }

    fn log_lik_unchecked(&self, theta: &[f64], x: &[f64]) -> f64 {
        x.chunks(self.block_dx)
            .enumerate()
            .map(|(m, xb)| self.block_log_lik(m, theta, xb))
            .sum()
    }

    fn grad_unchecked(&self, theta: &[f64], x: &[f64], g_theta: &mut [f64], g_x: &mut [f64]) {
        let (p, b) = (self.d_theta, self.block_dx);
        let k = p + b;
        g_theta.iter_mut().for_each(|g| *g = 0.0);
        for (m, (xb, gb)) in x.chunks(b).zip(g_x.chunks_mut(b)).enumerate() {
            let lin = &self.linear_terms[m * k..(m + 1) * k];
            for i in 0..k {
                let row = &self.h_rows[i * k..(i + 1) * k];
                let mut acc = lin[i];
                for j in 0..p {
                    acc += row[j] * theta[j];
                }
                for j in 0..b {
                    acc += row[p + j] * xb[j];
                }
                if i < p {
                    g_theta[i] += acc;
                } else {
                    gb[i - p] = acc;
                }
            }
        }
    }

    fn quadratic_form(&self) -> Option<QuadraticModel> {
        Some(self.to_quadratic())
    }
}
