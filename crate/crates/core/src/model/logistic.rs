use nalgebra::DMatrix;

use super::LatentModel;
use crate::error::{check_dim, Error, Result};

/// Bayesian logistic regression with a hierarchical Gaussian prior.
///
/// The latent variable `x ∈ ℝᵖ` holds the regression weights, the scalar
/// parameter `θ` is the prior mean shared by all weights:
///
/// `ℓ(θ, x) = −τ_θ θ²/2 − τ_x ‖x − θ𝟙‖²/2 + Σᵢ [yᵢ sᵢ − log(1 + e^{sᵢ})]`, `sᵢ = vᵢᵀx`.
///
/// Normalizing constants are dropped.
#[derive(Debug, Clone)]
pub struct LogisticModel {
    design: DMatrix<f64>,
    labels: Vec<f64>,
    prior_precision_theta: f64,
    prior_precision_x: f64,
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn log1p_exp(s: f64) -> f64 {
    if s > 0.0 {
        s + (-s).exp().ln_1p()
    } else {
        s.exp().ln_1p()
    }
}

impl LogisticModel {
    pub fn new(
        design: DMatrix<f64>,
        labels: Vec<f64>,
        prior_precision_theta: f64,
        prior_precision_x: f64,
    ) -> Result<Self> {
        check_dim("labels", design.nrows(), labels.len())?;
        if design.ncols() == 0 {
            return Err(Error::Config("design matrix has no columns".into()));
        }
        if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Config("labels must be 0 or 1".into()));
        }
        if !(prior_precision_theta > 0.0 && prior_precision_x > 0.0) {
            return Err(Error::Config("prior precisions must be positive".into()));
        }
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite design matrix".into()));
        }
        Ok(Self { design, labels, prior_precision_theta, prior_precision_x })
    }

    pub fn num_features(&self) -> usize {
        self.design.ncols()
    }

    fn score(&self, i: usize, x: &[f64]) -> f64 {
        self.design.row(i).iter().zip(x).map(|(v, w)| v * w).sum()
    }
}

impl LatentModel for LogisticModel {
    fn kind(&self) -> &'static str {
        "logistic"
    }

    fn dim_theta(&self) -> usize {
        1
    }

    fn dim_x(&self) -> usize {
        self.design.ncols()
    }

    fn log_lik_unchecked(&self, theta: &[f64], x: &[f64]) -> f64 {
        let t = theta[0];
        let prior_x: f64 = x.iter().map(|w| (w - t) * (w - t)).sum();
        let mut acc = -0.5 * self.prior_precision_theta * t * t - 0.5 * self.prior_precision_x * prior_x;
        for (i, &y) in self.labels.iter().enumerate() {
            let s = self.score(i, x);
            acc += y * s - log1p_exp(s);
        }
        acc
    }

    fn grad_unchecked(&self, theta: &[f64], x: &[f64], g_theta: &mut [f64], g_x: &mut [f64]) {
        let t = theta[0];
        let tau = self.prior_precision_x;
        let mut gt = -self.prior_precision_theta * t;
        for (g, w) in g_x.iter_mut().zip(x) {
            *g = -tau * (w - t);
            gt += tau * (w - t);
        }
        for (i, &y) in self.labels.iter().enumerate() {
            let r = y - sigmoid(self.score(i, x));
            for (g, v) in g_x.iter_mut().zip(self.design.row(i).iter()) {
                *g += r * v;
            }
        }
        g_theta[0] = gt;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::testing::assert_grad_matches_fd;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn small_model() -> LogisticModel {
        let design = DMatrix::from_row_slice(
            6,
            2,
            &[1.0, 0.5, -0.3, 1.2, 0.8, -1.0, -1.5, 0.2, 0.4, 0.9, 1.1, -0.7],
        );
        LogisticModel::new(design, vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0], 1.0, 0.5).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let t = [rng.gen_range(-3.0..3.0)];
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            assert_grad_matches_fd(&m, &t, &x);
        }
    }

    #[test]
    fn concave_along_random_chords() {
        let m = small_model();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let a: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.gen_range(-4.0..4.0)).collect();
            let s: f64 = rng.gen_range(0.0..1.0);
            let mid: Vec<f64> = a.iter().zip(&b).map(|(u, v)| (1.0 - s) * u + s * v).collect();
            let f = |z: &[f64]| m.log_lik_unchecked(&z[..1], &z[1..]);
            assert!(f(&mid) >= (1.0 - s) * f(&a) + s * f(&b) - 1e-12);
        }
    }

    #[test]
    fn gradients_finite_for_extreme_scores() {
        let m = small_model();
        let (mut gt, mut gx) = ([0.0], [0.0; 2]);
        m.grad_unchecked(&[0.0], &[1e6, -1e6], &mut gt, &mut gx);
        assert!(gt[0].is_finite() && gx.iter().all(|v| v.is_finite()));
        assert!(m.log_lik_unchecked(&[0.0], &[800.0, -800.0]).is_finite());
    }

    #[test]
    fn rejects_bad_labels() {
        let r = LogisticModel::new(DMatrix::zeros(1, 1), vec![2.0], 1.0, 1.0);
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
