use crate::error::{Error, Result};

/// Unweighted least-squares line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

impl SlopeFit {
    /// Decay rate of an exponential fit, `−slope`.
    pub fn rate(&self) -> f64 {
        -self.slope
    }
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::Domain(format!("{} abscissae for {} ordinates", xs.len(), ys.len())));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::Domain(format!("need at least 3 points, got {n}")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite value in fit input".into()));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("all abscissae are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) };
    Ok(SlopeFit { slope, intercept, r_squared, n_points: n })
}

fn logs(vals: &[f64], what: &str) -> Result<Vec<f64>> {
    vals.iter()
        .map(|&v| if v > 0.0 { Ok(v.ln()) } else { Err(Error::Domain(format!("{what} must be positive, got {v}"))) })
        .collect()
}

/// Fits `log y = slope · log x + intercept`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    least_squares(&logs(xs, "x")?, &logs(ys, "y")?)
}

/// Fits `log y = slope · t + intercept`; the decay rate is `−slope`.
pub fn exp_rate_fit(ts: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    least_squares(ts, &logs(ys, "y")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_laws() {
        let xs = [1.0, 2.0, 4.0, 8.0, 16.0];
        let f = loglog_slope(&xs, &xs).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-14 && (f.r_squared - 1.0).abs() < 1e-14);
        let ys: Vec<f64> = xs.iter().map(|x: &f64| x.sqrt()).collect();
        assert!((loglog_slope(&xs, &ys).unwrap().slope - 0.5).abs() < 1e-14);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (1..=12).map(|i| 2f64.powi(i)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.sqrt() * (1.0 + 0.01 * rng.gen_range(-1.0..1.0))).collect();
        let s = loglog_slope(&xs, &ys).unwrap().slope;
        assert!((0.45..=0.55).contains(&s));
    }

    #[test]
    fn exponential_rates() {
        let ts = [0.0, 0.5, 1.0, 2.0];
        let ys: Vec<f64> = ts.iter().map(|t: &f64| (-2.0 * t).exp()).collect();
        assert!((exp_rate_fit(&ts, &ys).unwrap().rate() - 2.0).abs() < 1e-12);
        let flat = exp_rate_fit(&ts, &[3.0; 4]).unwrap();
        assert_eq!(flat.rate(), 0.0);
        assert_eq!(flat.r_squared, 1.0);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(loglog_slope(&[1.0, 2.0, 0.0], &[1.0; 3]), Err(Error::Domain(_))));
        assert!(matches!(loglog_slope(&[1.0, 2.0], &[1.0; 2]), Err(Error::Domain(_))));
        assert!(matches!(exp_rate_fit(&[1.0, 2.0, 3.0], &[1.0, -1.0, 1.0]), Err(Error::Domain(_))));
    }
}
