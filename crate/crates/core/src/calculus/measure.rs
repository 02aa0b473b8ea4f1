use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{cholesky, is_symmetric, sym_sqrt};
use crate::rng::NoiseStream;

/// A Gaussian measure with symmetric positive-definite covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol_l: DMatrix<f64>,
}

impl GaussianMeasure {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        check_dim("covariance rows", mean.len(), cov.nrows())?;
        if !is_symmetric(&cov, 1e-12) {
            return Err(Error::DegenerateMeasure("covariance is not symmetric".into()));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::DegenerateMeasure("non-finite mean or covariance".into()));
        }
        let chol_l = cholesky(&cov)?.l();
        Ok(Self { mean, cov, chol_l })
    }

    pub fn from_slices(mean: &[f64], cov_row_major: &[f64]) -> Result<Self> {
        let d = mean.len();
        check_dim("covariance entries", d * d, cov_row_major.len())?;
        Self::new(
            DVector::from_column_slice(mean),
            DMatrix::from_row_slice(d, d, cov_row_major),
        )
    }

    pub fn standard(dim: usize) -> Self {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim)).expect("identity is SPD")
    }

    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, DMatrix::identity(d, d) * variance)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of the covariance.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol_l
    }

    /// `E‖X‖²` for `X` with this law.
    pub fn second_moment(&self) -> f64 {
        self.mean.norm_squared() + self.cov.trace()
    }

    /// Writes one draw into `out`, consuming standard normals from `stream`.
    pub fn sample_into(&self, stream: &mut NoiseStream, out: &mut [f64]) {
        let d = self.dim();
        let mut z = [0.0f64; 16];
        let mut z_heap;
        let z: &mut [f64] = if d <= 16 {
            &mut z[..d]
        } else {
            z_heap = vec![0.0; d];
            &mut z_heap
        };
        stream.fill_normal(z);
        for i in 0..d {
            let mut v = self.mean[i];
            for (j, zj) in z.iter().enumerate().take(i + 1) {
                v += self.chol_l[(i, j)] * zj;
            }
            out[i] = v;
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let diff = DVector::from_column_slice(x) - &self.mean;
        let y = self
            .chol_l
            .solve_lower_triangular(&diff)
            .expect("Cholesky factor is non-singular");
        let log_det: f64 = (0..d).map(|i| self.chol_l[(i, i)].ln()).sum::<f64>() * 2.0;
        -0.5 * (y.norm_squared() + log_det + d as f64 * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Squared Bures–Wasserstein distance between two PSD covariances.
///
/// Computed as `min_R ‖Σa^½ − Σb^½ R‖²_F` over orthogonal `R` (the polar
/// factor of `Σa^½ Σb^½`). This avoids the cancellation of the trace
/// formula when the two covariances are close.
pub fn bures_squared(cov_a: &DMatrix<f64>, cov_b: &DMatrix<f64>) -> Result<f64> {
    check_dim("covariance", cov_a.nrows(), cov_b.nrows())?;
    let ra = sym_sqrt(cov_a)?;
    let rb = sym_sqrt(cov_b)?;
    let cross = &ra * &rb;
    let svd = cross.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateMeasure("SVD failed in Bures distance".into())),
    };
    let rotation = v_t.transpose() * u.transpose();
    Ok((ra - rb * rotation).norm_squared())
}

/// Squared W₂ between Gaussians given by mean and PSD covariance (point masses allowed).
pub fn w2_squared_moments(
    mean_a: &DVector<f64>,
    cov_a: &DMatrix<f64>,
    mean_b: &DVector<f64>,
    cov_b: &DMatrix<f64>,
) -> Result<f64> {
    check_dim("mean", mean_a.len(), mean_b.len())?;
    Ok((mean_a - mean_b).norm_squared() + bures_squared(cov_a, cov_b)?)
}

/// Closed-form Wasserstein-2 distance between two Gaussian measures.
pub fn w2_gaussian(a: &GaussianMeasure, b: &GaussianMeasure) -> Result<f64> {
    Ok(w2_squared_moments(&a.mean, &a.cov, &b.mean, &b.cov)?.sqrt())
}

/// `√(‖θ−θ′‖² + W₂(q, q′)²)` on parameter–measure pairs.
pub fn d_metric(
    theta_a: &DVector<f64>,
    q_a: &GaussianMeasure,
    theta_b: &DVector<f64>,
    q_b: &GaussianMeasure,
) -> Result<f64> {
    check_dim("parameter", theta_a.len(), theta_b.len())?;
    let w2 = w2_gaussian(q_a, q_b)?;
    Ok(((theta_a - theta_b).norm_squared() + w2 * w2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trace_formula(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        let rb = sym_sqrt(b).unwrap();
        let inner = sym_sqrt(&crate::linalg::symmetrize(&(&rb * a * &rb))).unwrap();
        (a + b - inner * 2.0).trace()
    }

    fn g(mean: &[f64], cov: &[f64]) -> GaussianMeasure {
        GaussianMeasure::from_slices(mean, cov).unwrap()
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let a = g(&[1.0, -2.0], &[2.0, 0.3, 0.3, 1.0]);
        assert!(w2_gaussian(&a, &a).unwrap() < 1e-12);
    }

    #[test]
    fn pure_mean_shift() {
        let a = g(&[0.0], &[1.0]);
        let b = g(&[1.0], &[1.0]);
        assert!((w2_gaussian(&a, &b).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn scaled_identity_covariances() {
        let a = GaussianMeasure::isotropic(DVector::zeros(2), 1.0).unwrap();
        let b = GaussianMeasure::isotropic(DVector::zeros(2), 4.0).unwrap();
        let w = w2_gaussian(&a, &b).unwrap();
        assert!((w - 2f64.sqrt()).abs() < 1e-14);
        // Each 1D marginal pair is N(0,1) vs N(0,4): quantile coupling gives (2-1)² per axis.
        let per_axis: f64 = (4f64.sqrt() - 1.0).powi(2);
        assert!((w * w - 2.0 * per_axis).abs() < 1e-13);
    }

    #[test]
    fn d_metric_components() {
        let q = g(&[0.0], &[1.0]);
        let t0 = DVector::from_element(1, 0.0);
        let t3 = DVector::from_element(1, 3.0);
        assert_eq!(d_metric(&t0, &q, &t0, &q).unwrap(), 0.0);
        assert!((d_metric(&t0, &q, &t3, &q).unwrap() - 3.0).abs() < 1e-14);
        let q4 = g(&[4.0], &[1.0]);
        assert!((d_metric(&t0, &q, &t3, &q4).unwrap() - 5.0).abs() < 1e-14);
    }

    #[test]
    fn point_mass_to_gaussian_is_root_second_moment() {
        let zero = DMatrix::zeros(2, 2);
        let b = g(&[1.0, 0.0], &[0.5, 0.0, 0.0, 0.25]);
        let w2 = w2_squared_moments(&DVector::zeros(2), &zero, b.mean(), b.cov()).unwrap();
        assert!((w2 - b.second_moment()).abs() < 1e-14);
    }

    fn spd(seed: &[f64]) -> DMatrix<f64> {
        let a = DMatrix::from_row_slice(3, 3, seed);
        &a * a.transpose() + DMatrix::identity(3, 3) * 0.1
    }

    proptest! {
        #[test]
        fn stable_bures_matches_trace_formula(
            xs in proptest::collection::vec(-1.0f64..1.0, 9),
            ys in proptest::collection::vec(-1.0f64..1.0, 9),
        ) {
            let a = spd(&xs);
            let b = spd(&ys);
            let stable = bures_squared(&a, &b).unwrap();
            let trace = trace_formula(&a, &b);
            prop_assert!((stable - trace).abs() < 1e-10 * (1.0 + trace.abs()));
            prop_assert!((stable - bures_squared(&b, &a).unwrap()).abs() < 1e-10);
        }

        #[test]
        fn w2_triangle_inequality(
            xs in proptest::collection::vec(-1.0f64..1.0, 9),
            ys in proptest::collection::vec(-1.0f64..1.0, 9),
            zs in proptest::collection::vec(-1.0f64..1.0, 9),
            ms in proptest::collection::vec(-3.0f64..3.0, 9),
        ) {
            let a = GaussianMeasure::new(DVector::from_column_slice(&ms[0..3]), spd(&xs)).unwrap();
            let b = GaussianMeasure::new(DVector::from_column_slice(&ms[3..6]), spd(&ys)).unwrap();
            let c = GaussianMeasure::new(DVector::from_column_slice(&ms[6..9]), spd(&zs)).unwrap();
            let ab = w2_gaussian(&a, &b).unwrap();
            let bc = w2_gaussian(&b, &c).unwrap();
            let ac = w2_gaussian(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-10);
            prop_assert!((ab - w2_gaussian(&b, &a).unwrap()).abs() < 1e-10);
        }
    }
}
