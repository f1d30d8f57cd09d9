//! Ground-truth CMDP solutions from the occupation-measure linear program
//!
//! `min Σ c ν  s.t.  Σ_a ν(s',a) - γ Σ P(s'|s,a) ν(s,a) = (1-γ) μ0(s'),
//! Σ d_k ν ≤ q_k,  ν ≥ 0`.

use serde::Serialize;
use thiserror::Error;

use crate::exact::stationary_from_occupation;
use crate::model::{OccupationMeasure, StationaryPolicy, TabularCmdp};
use crate::simplex::{LinearProgram, LpError, LpSolution};

/// Largest state-action count accepted by [`solve_lp`].
pub const MAX_ORACLE_PAIRS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("constraints cannot be satisfied by any policy (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("instance has {pairs} state-action pairs, oracle limit is {limit}")]
    TooLarge { pairs: usize, limit: usize },
    #[error("linear program failed: {0}")]
    Lp(LpError),
}

impl From<LpError> for OracleError {
    fn from(e: LpError) -> Self {
        match e {
            LpError::Infeasible(r) => OracleError::Infeasible(r),
            other => OracleError::Lp(other),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleSolution {
    pub nu_star: OccupationMeasure,
    /// Optimal normalized cost `Σ c ν*`.
    pub c_star: f64,
    pub policy_star: StationaryPolicy,
    /// `q_k - Σ d_k ν*`.
    pub dual_slacks: Vec<f64>,
    /// Optimal Lagrange multipliers of the constraint rows.
    pub multipliers: Vec<f64>,
}

impl OracleSolution {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("solution serializes")
    }

    /// Norm of the optimal multiplier vector.
    pub fn multiplier_norm(&self) -> f64 {
        self.multipliers.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// The occupation-measure LP of `cmdp`, one column per state-action pair in
/// flat pair order.
pub fn occupation_lp(cmdp: &TabularCmdp) -> LinearProgram {
    let n = cmdp.n_states();
    let np = cmdp.n_pairs();
    let g = cmdp.discount();
    let mut a_eq = vec![vec![0.0; np]; n];
    let mut c = vec![0.0; np];
    let mut a_ub = vec![vec![0.0; np]; cmdp.n_constraints()];
    for s in 0..n {
        for a in 0..cmdp.n_actions(s) {
            let j = cmdp.pair(s, a);
            c[j] = cmdp.cost(s, a);
            a_eq[s][j] += 1.0;
            for (sp, &p) in cmdp.kernel_row(s, a).iter().enumerate() {
                a_eq[sp][j] -= g * p;
            }
            for (k, &d) in cmdp.aux(s, a).iter().enumerate() {
                a_ub[k][j] = d;
            }
        }
    }
    LinearProgram {
        c,
        a_eq,
        b_eq: cmdp.init_dist().iter().map(|m| (1.0 - g) * m).collect(),
        a_ub,
        b_ub: cmdp.thresholds().to_vec(),
    }
}

pub fn solve_lp(cmdp: &TabularCmdp) -> Result<OracleSolution, OracleError> {
    if cmdp.n_pairs() > MAX_ORACLE_PAIRS {
        return Err(OracleError::TooLarge { pairs: cmdp.n_pairs(), limit: MAX_ORACLE_PAIRS });
    }
    let sol: LpSolution = occupation_lp(cmdp).solve()?;
    let rows: Vec<Vec<f64>> = (0..cmdp.n_states())
        .map(|s| (0..cmdp.n_actions(s)).map(|a| sol.x[cmdp.pair(s, a)]).collect())
        .collect();
    let nu_star = OccupationMeasure::from_rows(rows);
    let c_star = nu_star.integrate(|s, a| cmdp.cost(s, a));
    let dual_slacks = (0..cmdp.n_constraints())
        .map(|k| cmdp.thresholds()[k] - nu_star.integrate(|s, a| cmdp.aux(s, a)[k]))
        .collect();
    let policy_star = stationary_from_occupation(&nu_star);
    Ok(OracleSolution { nu_star, c_star, policy_star, dual_slacks, multipliers: sol.ub_multipliers })
}

/// `true` iff `λ_k (D_k - q_k)` is within `1e-6` of zero for every `k`, with
/// `D_k` taken from the solution's occupation measure.
pub fn check_complementary_slackness(sol: &OracleSolution, lambda: &[f64]) -> bool {
    lambda.len() == sol.dual_slacks.len()
        && lambda.iter().zip(&sol.dual_slacks).all(|(l, slack)| (l * slack).abs() <= 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CmdpParts;

    fn two_action(costs: [f64; 2], aux: [f64; 2], q: Option<f64>) -> TabularCmdp {
        let (aux_costs, thresholds) = match q {
            Some(q) => (vec![vec![vec![aux[0]], vec![aux[1]]]], vec![q]),
            None => (vec![vec![vec![], vec![]]], vec![]),
        };
        TabularCmdp::new(CmdpParts {
            kernel: vec![vec![vec![1.0], vec![1.0]]],
            cost: vec![costs.to_vec()],
            aux_costs,
            thresholds,
            discount: 0.5,
            init_dist: vec![1.0],
            cost_lower_bound: -1.0,
        })
        .unwrap()
    }

    #[test]
    fn unconstrained_picks_cheap_action() {
        let sol = solve_lp(&two_action([1.0, 2.0], [0.0, 0.0], None)).unwrap();
        assert!((sol.c_star - 1.0).abs() < 1e-12);
        assert!((sol.nu_star.get(0, 0) - 1.0).abs() < 1e-12);
        assert_eq!(sol.policy_star.row(0), &[1.0, 0.0]);
    }

    #[test]
    fn binding_constraint_mixes_and_prices() {
        // cheap action uses resource 1, expensive one uses 0; budget 0.25
        let cmdp = two_action([1.0, 2.0], [1.0, 0.0], Some(0.25));
        let sol = solve_lp(&cmdp).unwrap();
        assert!((sol.c_star - 1.75).abs() < 1e-10);
        assert!(sol.dual_slacks[0].abs() < 1e-10);
        // relaxing q by ε lowers the cost by ε: multiplier 1
        assert!((sol.multipliers[0] - 1.0).abs() < 1e-10);
        assert!(check_complementary_slackness(&sol, &sol.multipliers));
    }

    #[test]
    fn infeasible_instance_is_explicit() {
        let cmdp = two_action([1.0, 2.0], [1.0, 0.5], Some(0.1));
        assert!(matches!(solve_lp(&cmdp), Err(OracleError::Infeasible(_))));
    }

    #[test]
    fn complementary_slackness_cases() {
        let slack = solve_lp(&two_action([1.0, 2.0], [1.0, 0.0], Some(5.0))).unwrap();
        assert!(check_complementary_slackness(&slack, &[0.0]));
        assert!(!check_complementary_slackness(&slack, &[0.5]));
        let tight = solve_lp(&two_action([1.0, 2.0], [1.0, 0.0], Some(0.25))).unwrap();
        assert!(check_complementary_slackness(&tight, &[3.0]));
    }

    #[test]
    fn json_contains_solution_fields() {
        let sol = solve_lp(&two_action([1.0, 2.0], [0.0, 0.0], None)).unwrap();
        let v: serde_json::Value = serde_json::from_str(&sol.to_json()).unwrap();
        assert_eq!(v["c_star"], 1.0);
        assert!(v["nu_star"]["mass"].is_array());
        assert!(v["policy_star"]["probs"].is_array());
    }
}
