//! Straight-line check of the running averaged cost against the predicted
//! convergence rate: `1/T` for constant steps, `1/√T` for decreasing ones.

use cmdp_core::primal_dual::{IterationRecord, StepKind};
use serde::Serialize;
use thiserror::Error;

/// Shortest trail the regression accepts.
pub const MIN_TRAIL: usize = 50;
/// Share of the trail (from the end) used in the fit.
pub const FIT_FRACTION: f64 = 0.8;

#[derive(Debug, Error, PartialEq)]
pub enum RateError {
    #[error("trail has {0} rows, the regression needs at least {MIN_TRAIL}")]
    TooShort(usize),
    #[error("trail is degenerate: {0}")]
    Degenerate(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Number of points in the fit.
    pub points: usize,
}

/// Regressor for the running average after `t` iterations.
pub fn regressor(kind: StepKind, t: usize) -> f64 {
    match kind {
        StepKind::Constant => 1.0 / t as f64,
        StepKind::InverseSqrt => 1.0 / (t as f64).sqrt(),
    }
}

/// Ordinary least squares of `y` on `x` with intercept.
pub fn ols(x: &[f64], y: &[f64]) -> Result<RateFit, RateError> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return Err(RateError::Degenerate("need at least two paired points"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RateError::Degenerate("non-finite values"));
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(RateError::Degenerate("regressor is constant"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    // a perfectly flat response is explained exactly by the intercept
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { slope, intercept, r_squared, points: x.len() })
}

/// Fits `values[m]` (the running average after `m + 1` iterations) against
/// the regime's regressor over the last 80% of the sequence.
pub fn rate_regression_values(values: &[f64], kind: StepKind) -> Result<RateFit, RateError> {
    if values.len() < MIN_TRAIL {
        return Err(RateError::TooShort(values.len()));
    }
    let start = values.len() - (FIT_FRACTION * values.len() as f64).round() as usize;
    let x: Vec<f64> = (start..values.len()).map(|m| regressor(kind, m + 1)).collect();
    ols(&x, &values[start..])
}

/// [`rate_regression_values`] on a solver trail's running averaged cost.
pub fn rate_regression(trail: &[IterationRecord], kind: StepKind) -> Result<RateFit, RateError> {
    let values: Vec<f64> = trail.iter().map(|r| r.running_avg_objective).collect();
    rate_regression_values(&values, kind)
}

/// Plot data `T,x,running_avg_objective` for the rate figure.
pub fn rate_csv(trail: &[IterationRecord], kind: StepKind, scale: f64) -> String {
    let mut out = String::from("T,x,running_avg_objective\n");
    for r in trail {
        let t = r.m + 1;
        out.push_str(&format!("{t},{:?},{:?}\n", regressor(kind, t), r.running_avg_objective * scale));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
        (1..=n).map(|t| f(t as f64)).collect()
    }

    #[test]
    fn exact_inverse_t_model_is_recovered() {
        let v = synthetic(500, |t| 49.0 + 30.0 / t);
        let fit = rate_regression_values(&v, StepKind::Constant).unwrap();
        assert!((fit.slope - 30.0).abs() < 1e-9);
        assert!((fit.intercept - 49.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.points, 400);
    }

    #[test]
    fn exact_inverse_sqrt_model_is_recovered() {
        let v = synthetic(200, |t| 2.0 - 3.0 / t.sqrt());
        let fit = rate_regression_values(&v, StepKind::InverseSqrt).unwrap();
        assert!((fit.slope + 3.0).abs() < 1e-9 && (fit.intercept - 2.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrong_rate_is_detectable() {
        // a 1/√T trail seen through the 1/T regressor bends visibly
        let v = synthetic(500, |t| 49.0 + 30.0 / t.sqrt());
        let wrong = rate_regression_values(&v, StepKind::Constant).unwrap();
        let right = rate_regression_values(&v, StepKind::InverseSqrt).unwrap();
        assert!(wrong.r_squared < 0.995, "R² = {}", wrong.r_squared);
        assert!(right.r_squared > 0.999_999);
    }

    #[test]
    fn short_or_degenerate_trails_are_rejected() {
        assert_eq!(rate_regression_values(&[1.0; 10], StepKind::Constant), Err(RateError::TooShort(10)));
        assert!(matches!(ols(&[1.0, 1.0], &[0.0, 2.0]), Err(RateError::Degenerate(_))));
        let mut v = synthetic(60, |t| 1.0 / t);
        v[30] = f64::NAN;
        assert!(matches!(rate_regression_values(&v, StepKind::Constant), Err(RateError::Degenerate(_))));
    }

    #[test]
    fn flat_trail_counts_as_explained() {
        let fit = rate_regression_values(&[3.0; 80], StepKind::Constant).unwrap();
        assert_eq!((fit.slope, fit.intercept, fit.r_squared), (0.0, 3.0, 1.0));
    }
}
