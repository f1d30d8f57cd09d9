//! Quadratic value-function approximation: `Q(s, a) ≈ ⟨φ(s), θ^a⟩` with
//! `φ(s) = (1, s ⊗ s)`, fitted by ridge-stabilized least squares.
//!
//! The outer product contains every monomial of degree two (the symmetric
//! ones twice), so `φ` has `(J+1)² + 1` entries for a class slice of length
//! `J + 1`. The duplicated columns make the plain normal equations singular;
//! a small ridge term selects the minimum-norm-like solution.

use nalgebra::{DMatrix, DVector};

/// Default ridge coefficient.
pub const RIDGE: f64 = 1e-6;

/// `(1, s⊗s)` flattened row-major.
pub fn quadratic_features(s: &[f64]) -> Vec<f64> {
    let mut f = Vec::with_capacity(s.len() * s.len() + 1);
    f.push(1.0);
    for &a in s {
        for &b in s {
            f.push(a * b);
        }
    }
    f
}

pub fn feature_dim(slice_len: usize) -> usize {
    slice_len * slice_len + 1
}

/// Fitted weights with their in-sample root mean squared error.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub weights: Vec<f64>,
    pub rmse: f64,
}

/// `argmin_θ (1/M) Σ (y_m - ⟨x_m, θ⟩)² + α ‖θ‖²` through the SVD of the
/// design. Directions with zero singular value (the duplicated monomials)
/// get zero weight, so symmetric pairs share their coefficient equally.
pub fn ridge_fit(features: &[Vec<f64>], targets: &[f64], alpha: f64) -> RidgeFit {
    let m = features.len();
    let p = features.first().map_or(0, Vec::len);
    assert_eq!(m, targets.len(), "one target per feature row");
    let x = DMatrix::from_fn(m, p, |r, c| features[r][c]);
    let y = DVector::from_column_slice(targets);
    // minimize ‖Xθ - y‖² / M + α‖θ‖²: θ = V diag(σ / (σ² + Mα)) Uᵀ y
    let svd = x.clone().svd(true, true);
    let (u, v_t) = (svd.u.expect("requested U"), svd.v_t.expect("requested Vᵀ"));
    let uty = u.transpose() * &y;
    let shrink = DVector::from_iterator(
        svd.singular_values.len(),
        svd.singular_values.iter().map(|&s| s / (s * s + m as f64 * alpha)),
    );
    let theta = v_t.transpose() * uty.component_mul(&shrink);
    let resid = &x * &theta - &y;
    let rmse = (resid.norm_squared() / m.max(1) as f64).sqrt();
    RidgeFit { weights: theta.iter().copied().collect(), rmse }
}

/// `⟨φ(s), θ⟩`.
pub fn predict(weights: &[f64], features: &[f64]) -> f64 {
    weights.iter().zip(features).map(|(w, f)| w * f).sum()
}

/// Root mean squared error of `weights` on a set of points.
pub fn rmse(weights: &[f64], features: &[Vec<f64>], targets: &[f64]) -> f64 {
    let sse: f64 = features.iter().zip(targets).map(|(f, y)| (predict(weights, f) - y).powi(2)).sum();
    (sse / targets.len().max(1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_examples() {
        assert_eq!(quadratic_features(&[0.0, 0.0]), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(quadratic_features(&[2.0, 3.0]), vec![1.0, 4.0, 6.0, 6.0, 9.0]);
        assert_eq!(quadratic_features(&[1.0; 4]).len(), 17);
        assert_eq!(feature_dim(4), 17);
    }

    #[test]
    fn constant_target_gives_intercept() {
        let pts: Vec<Vec<f64>> = (0..40).map(|k| quadratic_features(&[(k % 7) as f64, (k % 5) as f64])).collect();
        let fit = ridge_fit(&pts, &vec![4.5; 40], RIDGE);
        assert!((fit.weights[0] - 4.5).abs() < 1e-4, "{:?}", fit.weights);
        assert!(fit.weights[1..].iter().all(|w| w.abs() < 1e-4));
    }
}
