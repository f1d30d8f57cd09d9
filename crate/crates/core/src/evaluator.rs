//! The primal-dual loop on a single tabular CMDP.

use crate::exact::{costs_from_occupation, evaluate_policy_exact, occupation_exact};
use crate::model::{StationaryPolicy, TabularCmdp};
use crate::monte_carlo::{
    all_pairs, estimate_constraints, estimate_q, Environment, MCConfig, TabularEnv, TabularSampler,
};
use crate::primal_dual::{policy_update, Evaluation, EvaluatorKind, PrimalDualProblem, SolverError};

/// `(min, max)` over all entries of a table.
pub fn table_range(q: &[Vec<f64>]) -> (f64, f64) {
    q.iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// A tabular CMDP driven with either exact or sampled evaluation.
///
/// Sampling goes through `env`, a generative model over the same state
/// indices and action sets. By default that is the CMDP's own kernel with
/// expected costs; environments with realized random costs can be plugged in
/// with [`TabularProblem::with_env`].
#[derive(Debug, Clone)]
pub struct TabularProblem<'a, E = TabularEnv<'a>> {
    pub cmdp: &'a TabularCmdp,
    pub env: E,
}

impl<'a> TabularProblem<'a> {
    pub fn new(cmdp: &'a TabularCmdp) -> Self {
        Self { cmdp, env: TabularEnv::new(cmdp) }
    }
}

impl<'a, E: Environment<State = usize>> TabularProblem<'a, E> {
    pub fn with_env(cmdp: &'a TabularCmdp, env: E) -> Self {
        Self { cmdp, env }
    }
}

fn eval_err(e: impl std::fmt::Display) -> SolverError {
    SolverError::Evaluation { iteration: 0, message: e.to_string() }
}

impl<E: Environment<State = usize>> PrimalDualProblem for TabularProblem<'_, E> {
    type Policy = StationaryPolicy;
    type QTable = Vec<Vec<f64>>;

    fn thresholds(&self) -> &[f64] {
        self.cmdp.thresholds()
    }

    fn check_initial(&self, policy: &StationaryPolicy) -> Result<(), SolverError> {
        if !policy.matches(self.cmdp) {
            return Err(SolverError::Config("initial policy does not match the cmdp layout".into()));
        }
        if !policy.is_strictly_positive() {
            return Err(SolverError::Config("initial policy must have full support".into()));
        }
        Ok(())
    }

    fn evaluate(
        &self,
        policy: &StationaryPolicy,
        lambda: &[f64],
        evaluator: &EvaluatorKind,
        seed: u64,
    ) -> Result<Evaluation<Vec<Vec<f64>>>, SolverError> {
        let k = self.cmdp.n_constraints();
        match evaluator {
            EvaluatorKind::Exact => {
                let tables = evaluate_policy_exact(self.cmdp, policy, lambda).map_err(eval_err)?;
                let nu = occupation_exact(self.cmdp, policy).map_err(eval_err)?;
                let (c, d) = costs_from_occupation(self.cmdp, &nu);
                let (q_min, q_max) = table_range(&tables.q);
                Ok(Evaluation {
                    q_min,
                    q_max,
                    q: tables.q,
                    objective: c,
                    constraints: d,
                    se_objective: 0.0,
                    se_constraints: vec![0.0; k],
                })
            }
            EvaluatorKind::MonteCarlo(cfg) => {
                let cfg = MCConfig { seed, ..*cfg };
                let env = &self.env;
                let sampler = TabularSampler::new(policy);
                let pairs = all_pairs(self.cmdp);
                let est = estimate_q(env, &sampler, lambda, &pairs, &cfg).map_err(eval_err)?;
                let mut q: Vec<Vec<f64>> =
                    self.cmdp.action_counts().iter().map(|&n| Vec::with_capacity(n)).collect();
                for ((s, _), e) in pairs.iter().zip(&est) {
                    q[*s].push(e.mean);
                }
                let costs = estimate_constraints(env, &sampler, &cfg).map_err(eval_err)?;
                let (q_min, q_max) = table_range(&q);
                Ok(Evaluation {
                    q_min,
                    q_max,
                    q,
                    objective: costs.objective.mean,
                    constraints: costs.constraints.iter().map(|e| e.mean).collect(),
                    se_objective: costs.objective.se,
                    se_constraints: costs.constraints.iter().map(|e| e.se).collect(),
                })
            }
        }
    }

    fn improve(&self, policy: &StationaryPolicy, q: &Vec<Vec<f64>>, eta: f64) -> StationaryPolicy {
        policy_update(q, policy, eta)
    }
}
