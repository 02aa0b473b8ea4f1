use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::state::ParticleState;
use crate::error::{check_dim, Error, Result};
use crate::model::LatentModel;
use crate::rng::{NoiseStream, Purpose};

/// Particles per work unit. Partial sums of `∇_θℓ` are formed per chunk and
/// reduced in chunk order, which keeps results independent of thread count.
pub const CHUNK: usize = 256;

/// A particle update rule selectable by name.
pub trait ParticleAlgorithm: Send + Sync {
    fn name(&self) -> &'static str;

    /// Advances `state` by one step of size `h`, drawing noise from the
    /// counter-based streams of `seed` at index `state.step`.
    fn step(&self, model: &dyn LatentModel, state: &mut ParticleState, h: f64, seed: u64) -> Result<()>;
}

/// Algorithm 1: Euler–Maruyama on the particles, gradient ascent on `θ`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pgd;

/// PGD plus `√(2h/N)`-scaled Gaussian noise in the parameter update.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ipla;

impl ParticleAlgorithm for Pgd {
    fn name(&self) -> &'static str {
        "pgd"
    }

    fn step(&self, model: &dyn LatentModel, state: &mut ParticleState, h: f64, seed: u64) -> Result<()> {
        let k = state.step;
        let grad_sum = advance_particles(model, state, h, |i, w| {
            NoiseStream::new(seed, Purpose::ParticleNoise, k, i as u64).fill_normal(w)
        })?;
        finish_theta(state, &grad_sum, h, None)
    }
}

impl ParticleAlgorithm for Ipla {
    fn name(&self) -> &'static str {
        "ipla"
    }

    fn step(&self, model: &dyn LatentModel, state: &mut ParticleState, h: f64, seed: u64) -> Result<()> {
        let k = state.step;
        let grad_sum = advance_particles(model, state, h, |i, w| {
            NoiseStream::new(seed, Purpose::ParticleNoise, k, i as u64).fill_normal(w)
        })?;
        let mut xi = vec![0.0; state.theta.len()];
        NoiseStream::new(seed, Purpose::ParameterNoise, k, 0).fill_normal(&mut xi);
        finish_theta(state, &grad_sum, h, Some(&xi))
    }
}

/// Updates every particle in place from the incoming `θ` and returns
/// `Σₙ ∇_θℓ(θ, Xⁿ)` evaluated before the move.
fn advance_particles<F>(model: &dyn LatentModel, state: &mut ParticleState, h: f64, noise: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let dt = model.dim_theta();
    let dx = state.dim_x();
    check_dim("theta", dt, state.theta.len())?;
    check_dim("x", model.dim_x(), dx)?;
    let step = state.step;
    let theta = state.theta.clone();
    let scale = (2.0 * h).sqrt();
    let partials: Vec<Result<Vec<f64>>> = state
        .particles
        .par_chunks_mut(CHUNK * dx)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = vec![0.0; dt];
            let mut gt = vec![0.0; dt];
            let mut gx = vec![0.0; dx];
            let mut w = vec![0.0; dx];
            for (j, x) in chunk.chunks_exact_mut(dx).enumerate() {
                let i = c * CHUNK + j;
                model.grad_unchecked(&theta, x, &mut gt, &mut gx);
                if gt.iter().chain(&gx).any(|v| !v.is_finite()) {
                    return Err(Error::NumericalBlowup { step, detail: format!("non-finite gradient at particle {i}") });
                }
                noise(i, &mut w);
                for ((xk, g), wk) in x.iter_mut().zip(&gx).zip(&w) {
                    *xk += h * g + scale * wk;
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NumericalBlowup { step, detail: format!("particle {i} overflowed") });
                }
                for (a, g) in acc.iter_mut().zip(&gt) {
                    *a += g;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = vec![0.0; dt];
    for p in partials {
        for (t, v) in total.iter_mut().zip(p?) {
            *t += v;
        }
    }
    Ok(total)
}

fn finish_theta(state: &mut ParticleState, grad_sum: &[f64], h: f64, theta_noise: Option<&[f64]>) -> Result<()> {
    let n = state.num_particles() as f64;
    for (t, g) in state.theta.iter_mut().zip(grad_sum) {
        *t += h / n * g;
    }
    if let Some(xi) = theta_noise {
        let s = (2.0 * h / n).sqrt();
        for (t, z) in state.theta.iter_mut().zip(xi) {
            *t += s * z;
        }
    }
    if state.theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalBlowup { step: state.step, detail: "parameter overflowed".into() });
    }
    state.step += 1;
    Ok(())
}

fn check_step(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("step size must be positive and finite, got {h}")))
    }
}

/// One PGD step with caller-supplied standard normal draws (`N × d_x`, row-major).
pub fn pgd_step(state: &ParticleState, model: &dyn LatentModel, h: f64, noise: &[f64]) -> Result<ParticleState> {
    check_step(h)?;
    check_dim("noise", state.particles.len(), noise.len())?;
    let dx = state.dim_x();
    let mut next = state.clone();
    let g = advance_particles(model, &mut next, h, |i, w| w.copy_from_slice(&noise[i * dx..(i + 1) * dx]))?;
    finish_theta(&mut next, &g, h, None)?;
    Ok(next)
}

/// One IPLA step with caller-supplied draws for the particles and for `θ`.
pub fn ipla_step(
    state: &ParticleState,
    model: &dyn LatentModel,
    h: f64,
    noise_x: &[f64],
    noise_theta: &[f64],
) -> Result<ParticleState> {
    check_step(h)?;
    check_dim("noise_x", state.particles.len(), noise_x.len())?;
    check_dim("noise_theta", state.theta.len(), noise_theta.len())?;
    let dx = state.dim_x();
    let mut next = state.clone();
    let g = advance_particles(model, &mut next, h, |i, w| w.copy_from_slice(&noise_x[i * dx..(i + 1) * dx]))?;
    finish_theta(&mut next, &g, h, Some(noise_theta))?;
    Ok(next)
}

/// Particle algorithms selectable by name.
#[derive(Clone)]
pub struct AlgorithmRegistry {
    algorithms: BTreeMap<&'static str, Arc<dyn ParticleAlgorithm>>,
}

impl Default for AlgorithmRegistry {
    fn default() -> Self {
        let mut r = Self { algorithms: BTreeMap::new() };
        r.register(Arc::new(Pgd));
        r.register(Arc::new(Ipla));
        r
    }
}

impl AlgorithmRegistry {
    pub fn register(&mut self, algorithm: Arc<dyn ParticleAlgorithm>) {
        self.algorithms.insert(algorithm.name(), algorithm);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.algorithms.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ParticleAlgorithm>> {
        self.algorithms.get(name).cloned().ok_or_else(|| {
            Error::Config(format!(
                "unknown algorithm `{name}` (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}
