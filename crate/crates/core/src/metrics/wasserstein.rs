use statrs::distribution::{ContinuousCDF, Normal};

use crate::calculus::GaussianMeasure;
use crate::error::{check_dim, Error, Result};
use crate::rng::{NoiseStream, Purpose};
use crate::sampler::ParticleState;

/// Largest cloud accepted by the cubic-time assignment solver.
pub const ASSIGNMENT_CAP: usize = 4096;

/// `N` equally weighted points in `ℝᵈ`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<f64>,
    dim: usize,
}

impl PointCloud {
    pub fn new(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 || points.is_empty() || points.len() % dim != 0 {
            return Err(Error::Config(format!(
                "point buffer of length {} does not hold a non-empty set of {dim}-vectors",
                points.len()
            )));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("point cloud has non-finite entries".into()));
        }
        Ok(Self { points, dim })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        for r in rows {
            check_dim("point", dim, r.len())?;
        }
        Self::new(rows.concat(), dim)
    }

    pub fn from_state(state: &ParticleState) -> Self {
        Self { points: state.particles.clone(), dim: state.dim_x() }
    }

    /// `n` i.i.d. draws from `g`, draw `i` taken from reference stream `(seed, i)`.
    pub fn sample(g: &GaussianMeasure, n: usize, seed: u64) -> Self {
        let dim = g.dim();
        let mut points = vec![0.0; n * dim];
        for (i, p) in points.chunks_exact_mut(dim).enumerate() {
            g.sample_into(&mut NoiseStream::new(seed, Purpose::Reference, 0, i as u64), p);
        }
        Self { points, dim }
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn cost_of(a: &PointCloud, b: &PointCloud, assignment: &[usize]) -> f64 {
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| sq_dist(a.point(i), b.point(j))).sum();
    (total / a.len() as f64).sqrt()
}

/// Minimum-cost perfect matching on a dense `n × n` row-major cost matrix;
/// returns the column assigned to each row.
///
/// Shortest augmenting paths with row/column potentials, `O(n³)`.
pub fn optimal_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n × n");
    // 1-based internally; column 0 is the virtual source.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        minv.fill(f64::INFINITY);
        used.fill(false);
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let row = &cost[(i0 - 1) * n..i0 * n];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[row_of[j] - 1] = j - 1;
    }
    assignment
}

/// Monotone (sorted) matching of two 1D clouds of equal size.
pub fn sorted_assignment(a: &PointCloud, b: &PointCloud) -> Vec<usize> {
    let order = |c: &PointCloud| {
        let mut idx: Vec<usize> = (0..c.len()).collect();
        idx.sort_by(|&i, &j| c.points[i].total_cmp(&c.points[j]));
        idx
    };
    let (oa, ob) = (order(a), order(b));
    let mut assignment = vec![0; a.len()];
    for (i, j) in oa.into_iter().zip(ob) {
        assignment[i] = j;
    }
    assignment
}

/// Exact `W₂` between two uniform empirical measures of equal size.
///
/// One dimension uses the sorted matching; otherwise an optimal assignment
/// on squared Euclidean costs, limited to [`ASSIGNMENT_CAP`] points.
pub fn w2_empirical(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_dim("point cloud dimension", a.dim(), b.dim())?;
    if a.len() != b.len() {
        return Err(Error::Unsupported(format!(
            "W2 between clouds of different sizes ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.dim() == 1 {
        return Ok(cost_of(a, b, &sorted_assignment(a, b)));
    }
    w2_assignment(a, b)
}

/// `W₂` through the general assignment solver, whatever the dimension.
pub fn w2_assignment(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    check_dim("point cloud dimension", a.dim(), b.dim())?;
    let n = a.len();
    if n != b.len() {
        return Err(Error::Unsupported(format!("W2 between clouds of different sizes ({n} vs {})", b.len())));
    }
    if n > ASSIGNMENT_CAP {
        return Err(Error::Size(format!("{n} points exceeds the assignment cap of {ASSIGNMENT_CAP}")));
    }
    let mut cost = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            cost[i * n + j] = sq_dist(a.point(i), b.point(j));
        }
    }
    Ok(cost_of(a, b, &optimal_assignment(&cost, n)))
}

/// `W₂` between a 1D cloud and `N(mean, sd²)`, `sd ≥ 0`, via the quantile
/// coupling. Each of the `N` quantile intervals is integrated in closed form.
pub fn w2_cloud_to_normal_1d(a: &PointCloud, mean: f64, sd: f64) -> Result<f64> {
    check_dim("point cloud dimension", 1, a.dim())?;
    if !(sd >= 0.0 && sd.is_finite() && mean.is_finite()) {
        return Err(Error::Domain(format!("invalid normal N({mean}, {sd}²)")));
    }
    let mut xs = a.points.clone();
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if sd == 0.0 {
        return Ok((xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).sqrt());
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    let phi = |z: f64| if z.is_finite() { (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt() } else { 0.0 };
    let zphi = |z: f64| if z.is_finite() { z * phi(z) } else { 0.0 };
    let z_at = |i: usize| match i {
        0 => f64::NEG_INFINITY,
        i if i == n => f64::INFINITY,
        i => std.inverse_cdf(i as f64 / n as f64),
    };
    let width = 1.0 / n as f64;
    let mut total = 0.0;
    let mut za = z_at(0);
    for (i, x) in xs.iter().enumerate() {
        let zb = z_at(i + 1);
        let c = x - mean;
        total += c * c * width - 2.0 * c * sd * (phi(za) - phi(zb)) + sd * sd * (width - (zphi(zb) - zphi(za)));
        za = zb;
    }
    Ok(total.max(0.0).sqrt())
}

/// [`w2_cloud_to_normal_1d`] against a one-dimensional [`GaussianMeasure`].
pub fn w2_cloud_to_gaussian_1d(a: &PointCloud, g: &GaussianMeasure) -> Result<f64> {
    check_dim("gaussian dimension", 1, g.dim())?;
    w2_cloud_to_normal_1d(a, g.mean()[0], g.cov()[(0, 0)].sqrt())
}
