//! Exact (linear-algebraic) policy evaluation.
//!
//! Every value here carries the `(1-γ)` normalization: `V(s)` is
//! `(1-γ) E[Σ γ^t c_t | s_0 = s]`, so a constant cost `c` has value `c`.

use thiserror::Error;

use crate::linalg::{solve_dense, SingularMatrix};
use crate::model::{MixingPolicy, OccupationMeasure, StationaryPolicy, TabularCmdp, ValueTables};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("lambda has {got} entries, cmdp has {expected} constraints")]
    LambdaLength { expected: usize, got: usize },
    #[error("lambda entry {index} is negative ({value})")]
    NegativeLambda { index: usize, value: f64 },
    #[error("policy does not match the cmdp's state/action layout")]
    PolicyShape,
    #[error("linear system singular at column {}", .0.column)]
    Singular(SingularMatrix),
}

impl From<SingularMatrix> for EvalError {
    fn from(e: SingularMatrix) -> Self {
        EvalError::Singular(e)
    }
}

pub(crate) fn check_lambda(cmdp: &TabularCmdp, lambda: &[f64]) -> Result<(), EvalError> {
    if lambda.len() != cmdp.n_constraints() {
        return Err(EvalError::LambdaLength { expected: cmdp.n_constraints(), got: lambda.len() });
    }
    if let Some((index, &value)) = lambda.iter().enumerate().find(|(_, &l)| !(l >= 0.0)) {
        return Err(EvalError::NegativeLambda { index, value });
    }
    Ok(())
}

fn check_policy(cmdp: &TabularCmdp, policy: &StationaryPolicy) -> Result<(), EvalError> {
    if policy.matches(cmdp) {
        Ok(())
    } else {
        Err(EvalError::PolicyShape)
    }
}

/// `V` and `Q` of the Lagrangian cost `c + λ·(d - q)` under `policy`.
pub fn evaluate_policy_exact(
    cmdp: &TabularCmdp,
    policy: &StationaryPolicy,
    lambda: &[f64],
) -> Result<ValueTables, EvalError> {
    check_lambda(cmdp, lambda)?;
    check_policy(cmdp, policy)?;
    let cost = |s: usize, a: usize| cmdp.lagrangian_cost(s, a, lambda);
    evaluate_with_cost(cmdp, policy, cost)
}

/// Exact evaluation for an arbitrary per-pair cost function.
pub fn evaluate_with_cost(
    cmdp: &TabularCmdp,
    policy: &StationaryPolicy,
    cost: impl Fn(usize, usize) -> f64,
) -> Result<ValueTables, EvalError> {
    let n = cmdp.n_states();
    let g = cmdp.discount();
    let mut mat = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for s in 0..n {
        mat[s * n + s] += 1.0;
        for (a, &p) in policy.row(s).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            rhs[s] += (1.0 - g) * p * cost(s, a);
            for (sp, &t) in cmdp.kernel_row(s, a).iter().enumerate() {
                mat[s * n + sp] -= g * p * t;
            }
        }
    }
    let v = solve_dense(n, mat, &rhs)?;
    let q = (0..n)
        .map(|s| {
            (0..cmdp.n_actions(s))
                .map(|a| {
                    let cont: f64 = cmdp.kernel_row(s, a).iter().zip(&v).map(|(p, x)| p * x).sum();
                    (1.0 - g) * cost(s, a) + g * cont
                })
                .collect()
        })
        .collect();
    Ok(ValueTables { v, q })
}

/// Discounted state visitation `ν_s` under a stationary policy.
pub fn state_occupation(cmdp: &TabularCmdp, policy: &StationaryPolicy) -> Result<Vec<f64>, EvalError> {
    check_policy(cmdp, policy)?;
    let n = cmdp.n_states();
    let g = cmdp.discount();
    // (I - γ P_πᵀ) ν_s = (1-γ) μ0
    let mut mat = vec![0.0; n * n];
    for s in 0..n {
        mat[s * n + s] += 1.0;
        for (a, &p) in policy.row(s).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (sp, &t) in cmdp.kernel_row(s, a).iter().enumerate() {
                mat[sp * n + s] -= g * p * t;
            }
        }
    }
    let rhs: Vec<f64> = cmdp.init_dist().iter().map(|m| (1.0 - g) * m).collect();
    let mut nu = solve_dense(n, mat, &rhs)?;
    // clear roundoff below zero so the measure stays nonnegative
    for x in &mut nu {
        if *x < 0.0 && *x > -1e-14 {
            *x = 0.0;
        }
    }
    Ok(nu)
}

/// Occupation measure `ν(s,a) = ν_s(s) π(a|s)`.
pub fn occupation_exact(cmdp: &TabularCmdp, policy: &StationaryPolicy) -> Result<OccupationMeasure, EvalError> {
    let nu_s = state_occupation(cmdp, policy)?;
    let rows = nu_s
        .iter()
        .enumerate()
        .map(|(s, &m)| policy.row(s).iter().map(|p| m * p).collect())
        .collect();
    Ok(OccupationMeasure::from_rows(rows))
}

/// Anything that induces an occupation measure on a CMDP.
pub trait InducesOccupation {
    fn occupation(&self, cmdp: &TabularCmdp) -> Result<OccupationMeasure, EvalError>;
}

impl InducesOccupation for StationaryPolicy {
    fn occupation(&self, cmdp: &TabularCmdp) -> Result<OccupationMeasure, EvalError> {
        occupation_exact(cmdp, self)
    }
}

impl InducesOccupation for MixingPolicy {
    /// Weight-averaged member measures.
    fn occupation(&self, cmdp: &TabularCmdp) -> Result<OccupationMeasure, EvalError> {
        let measures = self
            .members()
            .iter()
            .map(|p| occupation_exact(cmdp, p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OccupationMeasure::average(&measures, self.weights()))
    }
}

/// `C = Σ c ν` and `D_k = Σ d_k ν` under the exact occupation measure.
pub fn costs_from_occupation(cmdp: &TabularCmdp, nu: &OccupationMeasure) -> (f64, Vec<f64>) {
    let c = nu.integrate(|s, a| cmdp.cost(s, a));
    let d = (0..cmdp.n_constraints())
        .map(|k| nu.integrate(|s, a| cmdp.aux(s, a)[k]))
        .collect();
    (c, d)
}

pub fn costs_of_policy<P: InducesOccupation + ?Sized>(
    cmdp: &TabularCmdp,
    policy: &P,
) -> Result<(f64, Vec<f64>), EvalError> {
    let nu = policy.occupation(cmdp)?;
    Ok(costs_from_occupation(cmdp, &nu))
}

/// Stationary policy with the same occupation measure as `mix`:
/// `π(a|s) = ν(s,a) / Σ_a ν(s,a)`, uniform where the averaged state mass is 0.
pub fn mixing_to_stationary(cmdp: &TabularCmdp, mix: &MixingPolicy) -> Result<StationaryPolicy, EvalError> {
    let nu = mix.occupation(cmdp)?;
    Ok(stationary_from_occupation(&nu))
}

pub fn stationary_from_occupation(nu: &OccupationMeasure) -> StationaryPolicy {
    let rows = nu
        .rows()
        .iter()
        .map(|row| {
            let mass: f64 = row.iter().sum();
            if mass > 0.0 {
                let mut r: Vec<f64> = row.iter().map(|&m| m.max(0.0) / mass).collect();
                let sum: f64 = r.iter().sum();
                r.iter_mut().for_each(|x| *x /= sum);
                r
            } else {
                vec![1.0 / row.len() as f64; row.len()]
            }
        })
        .collect();
    StationaryPolicy::new(rows).expect("normalized rows form a policy")
}

/// Per-state KL divergence; `+∞` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in p.iter().zip(q) {
        if x > 0.0 {
            if y <= 0.0 {
                return f64::INFINITY;
            }
            acc += x * (x / y).ln();
        }
    }
    acc.max(0.0)
}

/// `E_{s ~ ν_s^anchor} KL(p1(·|s) ‖ p2(·|s))`.
pub fn weighted_kl(
    cmdp: &TabularCmdp,
    anchor: &StationaryPolicy,
    p1: &StationaryPolicy,
    p2: &StationaryPolicy,
) -> Result<f64, EvalError> {
    check_policy(cmdp, p1)?;
    check_policy(cmdp, p2)?;
    let nu_s = state_occupation(cmdp, anchor)?;
    let mut acc = 0.0;
    for (s, &w) in nu_s.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        let kl = kl_divergence(p1.row(s), p2.row(s));
        if kl.is_infinite() {
            return Ok(f64::INFINITY);
        }
        acc += w * kl;
    }
    Ok(acc)
}

/// Both sides of the performance-difference identity for the Lagrangian
/// cost at `lambda`:
///
/// `lhs = E_μ0[V^{p1}] - E_μ0[V^{p2}]`,
/// `rhs = (1-γ)^{-1} E_{(s,a)~ν^{p2}}[V^{p1}(s) - Q^{p1}(s,a)]`.
pub fn performance_difference(
    cmdp: &TabularCmdp,
    lambda: &[f64],
    p1: &StationaryPolicy,
    p2: &StationaryPolicy,
) -> Result<(f64, f64), EvalError> {
    let t1 = evaluate_policy_exact(cmdp, p1, lambda)?;
    let t2 = evaluate_policy_exact(cmdp, p2, lambda)?;
    let mu = cmdp.init_dist();
    let e1: f64 = mu.iter().zip(&t1.v).map(|(m, v)| m * v).sum();
    let e2: f64 = mu.iter().zip(&t2.v).map(|(m, v)| m * v).sum();
    let nu2 = occupation_exact(cmdp, p2)?;
    let adv = nu2.integrate(|s, a| t1.v[s] - t1.q[s][a]);
    Ok((e1 - e2, adv / (1.0 - cmdp.discount())))
}

/// Expected value under `μ0` of a state-value table.
pub fn expected_under_init(cmdp: &TabularCmdp, v: &[f64]) -> f64 {
    cmdp.init_dist().iter().zip(v).map(|(m, x)| m * x).sum()
}

/// Optimal unconstrained policy for an arbitrary cost, by exact policy
/// iteration. Returns the deterministic policy and its values.
pub fn policy_iteration(
    cmdp: &TabularCmdp,
    cost: impl Fn(usize, usize) -> f64,
) -> Result<(StationaryPolicy, ValueTables), EvalError> {
    let counts = cmdp.action_counts().to_vec();
    let mut choice = vec![0usize; cmdp.n_states()];
    loop {
        let pol = StationaryPolicy::deterministic(&counts, &choice);
        let tables = evaluate_with_cost(cmdp, &pol, &cost)?;
        let mut changed = false;
        for s in 0..cmdp.n_states() {
            let row = &tables.q[s];
            let mut best = choice[s];
            for (a, &x) in row.iter().enumerate() {
                if x < row[best] - 1e-12 * (1.0 + row[best].abs()) {
                    best = a;
                }
            }
            if best != choice[s] {
                choice[s] = best;
                changed = true;
            }
        }
        if !changed {
            return Ok((pol, tables));
        }
    }
}
