//! Least-squares power-law fits in log-log coordinates.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in natural-log units.
    pub residual_rms: f64,
    /// Standard error of the slope (zero for an exact fit).
    pub stderr: f64,
    /// The fitted points as (ln x, ln y).
    pub points: Vec<(f64, f64)>,
}

impl FitResult {
    pub fn predict(&self, x: f64) -> f64 {
        (self.intercept + self.slope * x.ln()).exp()
    }
}

/// Fit `ln y = slope · ln x + intercept`.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 points, got {}", points.len())));
    }
    if let Some((x, y)) = points
        .iter()
        .find(|(x, y)| !(x.is_finite() && y.is_finite() && *x > 0.0 && *y > 0.0))
    {
        return Err(Error::Fit(format!("non-positive or non-finite point ({x}, {y})")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-12 * n {
        return Err(Error::Fit("degenerate x range".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = logs
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let residual_rms = (ss / n).sqrt();
    let stderr = (ss / (n - 2.0) / sxx).sqrt();
    Ok(FitResult {
        slope,
        intercept,
        residual_rms,
        stderr,
        points: logs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power() {
        let pts: Vec<_> = (1..=6).map(|i| (i as f64, (i as f64).powi(2))).collect();
        let f = fit_loglog(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-9);
        assert!(f.residual_rms < 1e-12);
        let c: Vec<_> = (1..=5).map(|i| (i as f64, 7.0)).collect();
        let f = fit_loglog(&c).unwrap();
        assert!(f.slope.abs() < 1e-12);
        assert!((f.predict(3.0) - 7.0).abs() < 1e-12);
    }

    #[test]
    fn noisy_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..20)
            .map(|i| {
                let x = 2f64.powf(i as f64 / 2.0);
                (x, x.powf(-1.5) * (1.0 + 0.01 * rng.random_range(-1.0..1.0)))
            })
            .collect();
        let f = fit_loglog(&pts).unwrap();
        assert!((f.slope + 1.5).abs() < 0.02);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_loglog(&[(1.0, 1.0), (2.0, 2.0), (3.0, 3.0)]).is_err());
        assert!(fit_loglog(&[(1.0, 1.0), (2.0, 0.0), (3.0, 3.0), (4.0, 1.0)]).is_err());
        assert!(fit_loglog(&[(2.0, 1.0), (2.0, 2.0), (2.0, 3.0), (2.0, 1.0)]).is_err());
    }
}
