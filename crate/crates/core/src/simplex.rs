//! Dense two-phase simplex with Dantzig pricing and a lexicographic ratio
//! test against cycling.
//!
//! Solves `min cᵀx  s.t.  A_eq x = b_eq,  A_ub x ≤ b_ub,  x ≥ 0`. Instances
//! handled here are small (a few hundred columns), so a full tableau is
//! cheaper to reason about than a revised method and is fully deterministic.

use thiserror::Error;

/// Phase-one objective above this means the constraints cannot be met.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Entering columns need a reduced cost below `-OPTIMALITY_TOL`.
pub const OPTIMALITY_TOL: f64 = 1e-10;
/// Tableau entries smaller than this are never used as pivots.
const PIVOT_TOL: f64 = 1e-11;
/// Relative tolerance below which ratio-test keys count as equal.
const LEX_TOL: f64 = 1e-12;
/// Pivot budget per phase, as a multiple of rows + columns.
const ITERATION_FACTOR: usize = 50;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("linear program is unbounded below (column {0})")]
    Unbounded(usize),
    #[error("simplex stopped after {0} pivots without converging")]
    IterationLimit(usize),
    #[error("malformed linear program: {0}")]
    Shape(String),
}

/// `min cᵀx` over `x ≥ 0` with equality rows and `≤` rows.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub c: Vec<f64>,
    pub a_eq: Vec<Vec<f64>>,
    pub b_eq: Vec<f64>,
    pub a_ub: Vec<Vec<f64>>,
    pub b_ub: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Nonnegative multipliers of the `≤` rows, so that
    /// `c + A_ubᵀ y_ub - A_eqᵀ y_eq` is a nonnegative reduced-cost vector.
    pub ub_multipliers: Vec<f64>,
    pub iterations: usize,
}

struct Tableau {
    rows: Vec<Vec<f64>>, // each row: n_cols entries followed by rhs
    obj: Vec<f64>,       // reduced costs, last entry = -objective
    basis: Vec<usize>,
    n_cols: usize,
    /// First artificial column; the artificial block holds `B⁻¹`.
    lex_start: usize,
    iterations: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, col: usize) {
        let p = self.rows[r][col];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[col];
            if f != 0.0 {
                for (x, &y) in row.iter_mut().zip(&pivot_row) {
                    *x -= f * y;
                }
                row[col] = 0.0;
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (x, &y) in self.obj.iter_mut().zip(&pivot_row) {
                *x -= f * y;
            }
            self.obj[col] = 0.0;
        }
        self.basis[r] = col;
        self.iterations += 1;
    }

    /// Pivots until no allowed column has a negative reduced cost.
    ///
    /// Entering columns follow Dantzig's rule (most negative reduced cost).
    /// Ratio-test ties are broken lexicographically on the rows of `B⁻¹`
    /// (the artificial block, which starts as the identity): every row stays
    /// lexicographically positive, so no basis repeats and the loop
    /// terminates even on heavily degenerate vertices.
    fn optimize(&mut self, allowed: impl Fn(usize) -> bool) -> Result<(), LpError> {
        let limit = ITERATION_FACTOR * (self.rows.len() + self.n_cols);
        let mut steps = 0;
        loop {
            let entering = (0..self.n_cols)
                .filter(|&j| allowed(j) && self.obj[j] < -OPTIMALITY_TOL)
                .min_by(|&a, &b| self.obj[a].total_cmp(&self.obj[b]));
            let Some(col) = entering else { return Ok(()) };
            let mut leave: Option<usize> = None;
            for i in 0..self.rows.len() {
                if self.rows[i][col] > PIVOT_TOL {
                    leave = match leave {
                        Some(best) if !self.lex_less(i, best, col) => Some(best),
                        _ => Some(i),
                    };
                }
            }
            let Some(r) = leave else { return Err(LpError::Unbounded(col)) };
            self.pivot(r, col);
            steps += 1;
            if steps > limit {
                return Err(LpError::IterationLimit(steps));
            }
        }
    }

    /// Whether row `i` beats row `k` in the ratio test for column `col`:
    /// compares `(rhs, B⁻¹ row) / pivot entry` lexicographically.
    fn lex_less(&self, i: usize, k: usize, col: usize) -> bool {
        let (ri, rk) = (&self.rows[i], &self.rows[k]);
        let (ai, ak) = (ri[col], rk[col]);
        // roundoff can leave basic values a hair below zero
        let key = |row: &[f64], a: f64, j: usize| if j == self.n_cols { row[j].max(0.0) / a } else { row[j] / a };
        let order = std::iter::once(self.n_cols).chain(self.lex_start..self.n_cols);
        for j in order {
            let (x, y) = (key(ri, ai, j), key(rk, ak, j));
            if (x - y).abs() > LEX_TOL * (1.0 + x.abs().max(y.abs())) {
                return x < y;
            }
        }
        false
    }
}

impl LinearProgram {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.c.len();
        if self.a_eq.len() != self.b_eq.len() || self.a_ub.len() != self.b_ub.len() {
            return Err(LpError::Shape("row count and rhs length differ".into()));
        }
        if self.a_eq.iter().chain(&self.a_ub).any(|r| r.len() != n) {
            return Err(LpError::Shape("every row needs one entry per variable".into()));
        }
        let finite = self
            .c
            .iter()
            .chain(&self.b_eq)
            .chain(&self.b_ub)
            .chain(self.a_eq.iter().flatten())
            .chain(self.a_ub.iter().flatten())
            .all(|v| v.is_finite());
        if !finite {
            return Err(LpError::Shape("non-finite coefficient".into()));
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        self.check()?;
        let n = self.c.len();
        let m_eq = self.a_eq.len();
        let m_ub = self.a_ub.len();
        let m = m_eq + m_ub;
        // columns: structural | slacks (one per ub row) | artificials (one per row)
        let n_struct = n + m_ub;
        let n_cols = n_struct + m;
        let mut rows = Vec::with_capacity(m);
        for i in 0..m {
            let mut row = vec![0.0; n_cols + 1];
            let (coeffs, b) = if i < m_eq {
                (&self.a_eq[i], self.b_eq[i])
            } else {
                (&self.a_ub[i - m_eq], self.b_ub[i - m_eq])
            };
            row[..n].copy_from_slice(coeffs);
            if i >= m_eq {
                row[n + (i - m_eq)] = 1.0;
            }
            row[n_cols] = b;
            if b < 0.0 {
                for v in row.iter_mut() {
                    *v = -*v;
                }
            }
            row[n_struct + i] = 1.0;
            rows.push(row);
        }
        // phase one: minimize the sum of artificials
        let mut obj = vec![0.0; n_cols + 1];
        for row in &rows {
            for j in 0..n_struct {
                obj[j] -= row[j];
            }
            obj[n_cols] -= row[n_cols];
        }
        let mut t = Tableau {
            rows,
            obj,
            basis: (n_struct..n_cols).collect(),
            n_cols,
            lex_start: n_struct,
            iterations: 0,
        };
        t.optimize(|_| true)?;
        let residual = -t.obj[n_cols];
        if residual > FEASIBILITY_TOL {
            return Err(LpError::Infeasible(residual));
        }

        // drive artificials out of the basis; rows where that is impossible
        // are linearly dependent and get dropped
        let mut r = 0;
        while r < t.rows.len() {
            if t.basis[r] >= n_struct {
                let col = (0..n_struct).find(|&j| t.rows[r][j].abs() > 1e-9);
                match col {
                    Some(j) => {
                        t.pivot(r, j);
                        r += 1;
                    }
                    None => {
                        t.rows.remove(r);
                        t.basis.remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }

        // phase two with the true costs
        let mut obj = vec![0.0; n_cols + 1];
        obj[..n].copy_from_slice(&self.c);
        for (i, row) in t.rows.iter().enumerate() {
            let cb = if t.basis[i] < n { self.c[t.basis[i]] } else { 0.0 };
            if cb != 0.0 {
                for (o, &v) in obj.iter_mut().zip(row) {
                    *o -= cb * v;
                }
            }
        }
        for &b in &t.basis {
            obj[b] = 0.0;
        }
        t.obj = obj;
        t.optimize(|j| j < n_struct)?;

        let mut x = vec![0.0; n];
        for (i, &b) in t.basis.iter().enumerate() {
            if b < n {
                x[b] = t.rows[i][n_cols].max(0.0);
            }
        }
        let objective = self.c.iter().zip(&x).map(|(c, x)| c * x).sum();
        // reduced cost of slack k equals the multiplier of ub row k (see
        // module notes: the sign flip of negative-rhs rows cancels out)
        let ub_multipliers = (0..m_ub).map(|k| t.obj[n + k].max(0.0)).collect();
        Ok(LpSolution { x, objective, ub_multipliers, iterations: t.iterations })
    }
}
