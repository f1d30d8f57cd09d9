//! Dense LU factorization with partial pivoting.
//!
//! The systems solved here are `(I - γ P)` or its transpose, which are
//! nonsingular for `γ < 1`, so there is no iterative fallback.

/// Row-major square matrix factored in place as `PA = LU`.
#[derive(Debug, Clone)]
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

/// Returned when a pivot collapses to (numerical) zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularMatrix {
    pub column: usize,
}

impl LuFactors {
    pub fn factor(n: usize, mut a: Vec<f64>) -> Result<Self, SingularMatrix> {
        assert_eq!(a.len(), n * n, "matrix must be n x n");
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].abs();
            for r in (k + 1)..n {
                let v = a[r * n + k].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-300 {
                return Err(SingularMatrix { column: k });
            }
            if piv != k {
                for c in 0..n {
                    a.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let diag = a[k * n + k];
            for r in (k + 1)..n {
                let f = a[r * n + k] / diag;
                if f == 0.0 {
                    continue;
                }
                a[r * n + k] = f;
                for c in (k + 1)..n {
                    a[r * n + c] -= f * a[k * n + c];
                }
            }
        }
        Ok(Self { n, lu: a, perm })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for r in 0..n {
            let mut s = x[r];
            for c in 0..r {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let mut s = x[r];
            for c in (r + 1)..n {
                s -= self.lu[r * n + c] * x[c];
            }
            x[r] = s / self.lu[r * n + r];
        }
        x
    }
}

/// Solves `a x = b` for a dense row-major `a`.
pub fn solve_dense(n: usize, a: Vec<f64>, b: &[f64]) -> Result<Vec<f64>, SingularMatrix> {
    Ok(LuFactors::factor(n, a)?.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system_needing_pivot() {
        // first pivot is zero, forcing a row swap
        let a = vec![0.0, 2.0, 1.0, 3.0, 1.0, 0.0, 1.0, 1.0, 1.0];
        let x_true = [1.0, -2.0, 0.5];
        let b: Vec<f64> = (0..3)
            .map(|r| (0..3).map(|c| a[r * 3 + c] * x_true[c]).sum())
            .collect();
        let x = solve_dense(3, a, &b).unwrap();
        for (u, v) in x.iter().zip(x_true) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_reported() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert!(solve_dense(2, a, &[1.0, 2.0]).is_err());
    }
}
