use crate::error::{check_dim, Error, Result};

/// Parameter `θ` and `N` latent particles stored row-major (`N × d_x`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    pub theta: Vec<f64>,
    pub particles: Vec<f64>,
    dim_x: usize,
    pub step: u64,
}

impl ParticleState {
    pub fn new(theta: Vec<f64>, particles: Vec<f64>, dim_x: usize) -> Result<Self> {
        if dim_x == 0 {
            return Err(Error::Config("latent dimension must be positive".into()));
        }
        if particles.is_empty() || particles.len() % dim_x != 0 {
            return Err(Error::Config(format!(
                "particle buffer of length {} is not a non-empty multiple of d_x = {dim_x}",
                particles.len()
            )));
        }
        if theta.iter().chain(&particles).any(|v| !v.is_finite()) {
            return Err(Error::Config("initial state has non-finite entries".into()));
        }
        Ok(Self { theta, particles, dim_x, step: 0 })
    }

    /// Builds a state from one row per particle.
    pub fn from_rows(theta: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let dim_x = rows.first().map_or(0, Vec::len);
        for r in rows {
            check_dim("particle", dim_x, r.len())?;
        }
        Self::new(theta, rows.concat(), dim_x)
    }

    pub fn num_particles(&self) -> usize {
        self.particles.len() / self.dim_x
    }

    pub fn dim_x(&self) -> usize {
        self.dim_x
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.dim_x..(i + 1) * self.dim_x]
    }

    pub fn mean_x(&self) -> Vec<f64> {
        let n = self.num_particles() as f64;
        let mut m = vec![0.0; self.dim_x];
        for p in self.particles.chunks_exact(self.dim_x) {
            for (a, v) in m.iter_mut().zip(p) {
                *a += v;
            }
        }
        m.iter_mut().for_each(|a| *a /= n);
        m
    }

    /// Covariance of the empirical measure (normalized by `N`), row-major.
    pub fn cov_x(&self) -> Vec<f64> {
        let d = self.dim_x;
        let n = self.num_particles() as f64;
        let m = self.mean_x();
        let mut c = vec![0.0; d * d];
        for p in self.particles.chunks_exact(d) {
            for i in 0..d {
                let di = p[i] - m[i];
                for j in 0..d {
                    c[i * d + j] += di * (p[j] - m[j]);
                }
            }
        }
        c.iter_mut().for_each(|a| *a /= n);
        c
    }

    /// `‖θ‖² + N⁻¹ Σₙ ‖Xⁿ‖²`.
    pub fn estimate_moment(&self) -> f64 {
        let t: f64 = self.theta.iter().map(|v| v * v).sum();
        let x: f64 = self.particles.iter().map(|v| v * v).sum();
        t + x / self.num_particles() as f64
    }
}
