//! Distances between empirical measures, Monte Carlo estimates of the error
//! metric, and rate fits.

mod estimate;
mod fit;
mod wasserstein;

pub use estimate::{d_random_estimate, replicate_error, replicate_seed, summarize, DEstimate, ReplicateError};
pub use fit::{exp_rate_fit, loglog_slope, SlopeFit};
pub use wasserstein::{
    optimal_assignment, sorted_assignment, w2_assignment, w2_cloud_to_gaussian_1d, w2_cloud_to_normal_1d, w2_empirical,
    PointCloud, ASSIGNMENT_CAP,
};
