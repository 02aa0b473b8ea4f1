//! Particle gradient descent for maximum marginal likelihood in latent
//! variable models, with a closed-form Gaussian layer for checking it.

pub mod calculus;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
