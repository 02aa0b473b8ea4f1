//! Particle gradient descent and its IPLA variant.
//!
//! A step moves every particle by a Langevin step at the incoming `θ` and
//! moves `θ` along the particle average of `∇_θℓ`, also at the incoming `θ`.
//! Noise for particle `i` at step `k` comes from its own counter-based stream,
//! so parallel execution is bitwise identical to serial execution.

mod algorithm;
mod run;
mod state;

pub use algorithm::{ipla_step, pgd_step, AlgorithmRegistry, Ipla, ParticleAlgorithm, Pgd, CHUNK};
pub use run::{initial_state, run, run_observed, run_with, Init, RunConfig, Snapshot, Trajectory};
pub use state::ParticleState;
