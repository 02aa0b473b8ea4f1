use serde::{Deserialize, Serialize};

use super::algorithm::{AlgorithmRegistry, ParticleAlgorithm};
use super::state::ParticleState;
use crate::calculus::GaussianMeasure;
use crate::error::{Error, Result};
use crate::linalg::from_rows;
use crate::model::LatentModel;
use crate::rng::{NoiseStream, Purpose};

/// How `(θ₀, X₀¹..X₀ᴺ)` is chosen.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// `θ₀` and every particle at the maximizer of `ℓ`; the origin for a
    /// centered model.
    #[default]
    WarmStart,
    /// Particles i.i.d. `N(mean, cov)`; `θ₀ = theta`, optionally perturbed by
    /// `theta_std` times a standard normal vector.
    Gaussian {
        theta: Vec<f64>,
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
        #[serde(default)]
        theta_std: f64,
    },
    /// Fully specified initial state, one row per particle.
    Explicit { theta: Vec<f64>, particles: Vec<Vec<f64>> },
}

fn default_algorithm() -> String {
    "pgd".into()
}

fn default_record_every() -> u64 {
    1
}

/// One sampler run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub h: f64,
    pub n: usize,
    pub k: u64,
    pub seed: u64,
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    #[serde(default)]
    pub init: Init,
    #[serde(default = "default_record_every")]
    pub record_every: u64,
    /// Keep the full particle matrix at each snapshot.
    #[serde(default)]
    pub record_particles: bool,
}

impl RunConfig {
    pub fn new(h: f64, n: usize, k: u64, seed: u64) -> Self {
        Self {
            h,
            n,
            k,
            seed,
            algorithm: default_algorithm(),
            init: Init::WarmStart,
            record_every: k.max(1),
            record_particles: false,
        }
    }

    pub fn with_algorithm(mut self, name: &str) -> Self {
        self.algorithm = name.into();
        self
    }

    pub fn with_init(mut self, init: Init) -> Self {
        self.init = init;
        self
    }

    pub fn with_record_every(mut self, every: u64) -> Self {
        self.record_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h must be positive and finite, got {}", self.h)));
        }
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.k > 0 && self.record_every > self.k {
            return Err(Error::Config(format!(
                "record_every = {} exceeds k = {}",
                self.record_every, self.k
            )));
        }
        Ok(())
    }
}

/// Summary of the particle system after `step` iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub step: u64,
    pub theta: Vec<f64>,
    pub mean_x: Vec<f64>,
    /// Empirical covariance, row-major.
    pub cov_x: Vec<f64>,
    pub particles: Option<Vec<f64>>,
}

impl Snapshot {
    fn of(state: &ParticleState, with_particles: bool) -> Self {
        Self {
            step: state.step,
            theta: state.theta.clone(),
            mean_x: state.mean_x(),
            cov_x: state.cov_x(),
            particles: with_particles.then(|| state.particles.clone()),
        }
    }

    /// `‖θ‖² + N⁻¹Σ‖Xⁿ‖²`, recovered from the summaries.
    pub fn moment(&self) -> f64 {
        let d = self.mean_x.len();
        let tr: f64 = (0..d).map(|i| self.cov_x[i * d + i]).sum();
        self.theta.iter().map(|v| v * v).sum::<f64>() + self.mean_x.iter().map(|v| v * v).sum::<f64>() + tr
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Step 0, every `record_every`-th step, and the final step.
    pub snapshots: Vec<Snapshot>,
    pub final_state: ParticleState,
}

/// Resolves the configured initialization.
pub fn initial_state(model: &dyn LatentModel, config: &RunConfig) -> Result<ParticleState> {
    let (dt, dx, n) = (model.dim_theta(), model.dim_x(), config.n);
    let bad = |what: &str, want: usize, got: usize| {
        Error::Config(format!("init {what} has length {got}, model needs {want}"))
    };
    match &config.init {
        Init::WarmStart => {
            let (theta, x) = model.maximizer().ok_or_else(|| {
                Error::Config(format!("warm start needs a closed-form maximizer; `{}` has none", model.kind()))
            })?;
            ParticleState::new(theta, x.repeat(n), dx)
        }
        Init::Gaussian { theta, mean, cov, theta_std } => {
            if theta.len() != dt {
                return Err(bad("theta", dt, theta.len()));
            }
            if mean.len() != dx {
                return Err(bad("mean", dx, mean.len()));
            }
            let cov = from_rows(cov).map_err(|e| Error::Config(format!("init cov: {e}")))?;
            let q = GaussianMeasure::new(nalgebra::DVector::from_column_slice(mean), cov)
                .map_err(|e| Error::Config(format!("init cov: {e}")))?;
            let mut particles = vec![0.0; n * dx];
            for (i, p) in particles.chunks_exact_mut(dx).enumerate() {
                q.sample_into(&mut NoiseStream::new(config.seed, Purpose::Init, 0, i as u64), p);
            }
            let mut theta = theta.clone();
            if *theta_std != 0.0 {
                let mut z = vec![0.0; dt];
                NoiseStream::new(config.seed, Purpose::Init, 1, 0).fill_normal(&mut z);
                theta.iter_mut().zip(&z).for_each(|(t, z)| *t += theta_std * z);
            }
            ParticleState::new(theta, particles, dx)
        }
        Init::Explicit { theta, particles } => {
            if theta.len() != dt {
                return Err(bad("theta", dt, theta.len()));
            }
            if particles.len() != n {
                return Err(bad("particle list", n, particles.len()));
            }
            if let Some(p) = particles.iter().find(|p| p.len() != dx) {
                return Err(bad("particle", dx, p.len()));
            }
            ParticleState::from_rows(theta.clone(), particles)
        }
    }
}

/// Runs `config` with the algorithm registered under `config.algorithm`.
pub fn run(model: &dyn LatentModel, config: &RunConfig) -> Result<Trajectory> {
    run_with(model, config, &AlgorithmRegistry::default())
}

pub fn run_with(model: &dyn LatentModel, config: &RunConfig, registry: &AlgorithmRegistry) -> Result<Trajectory> {
    config.validate()?;
    let algorithm = registry.get(&config.algorithm)?;
    let mut state = initial_state(model, config)?;
    let mut snapshots = vec![Snapshot::of(&state, config.record_particles)];
    drive(algorithm.as_ref(), model, config, &mut state, |s| {
        if s.step % config.record_every == 0 || s.step == config.k {
            snapshots.push(Snapshot::of(s, config.record_particles));
        }
    })?;
    Ok(Trajectory { snapshots, final_state: state })
}

/// Runs `config` calling `observe` after every step, without recording.
pub fn run_observed(
    model: &dyn LatentModel,
    config: &RunConfig,
    observe: impl FnMut(&ParticleState),
) -> Result<ParticleState> {
    config.validate()?;
    let algorithm = AlgorithmRegistry::default().get(&config.algorithm)?;
    let mut state = initial_state(model, config)?;
    drive(algorithm.as_ref(), model, config, &mut state, observe)?;
    Ok(state)
}

fn drive(
    algorithm: &dyn ParticleAlgorithm,
    model: &dyn LatentModel,
    config: &RunConfig,
    state: &mut ParticleState,
    mut observe: impl FnMut(&ParticleState),
) -> Result<()> {
    for _ in 0..config.k {
        algorithm.step(model, state, config.h, config.seed)?;
        observe(state);
    }
    Ok(())
}
