//! Constrained MDP toolkit: tabular models, exact evaluation, an
//! occupation-measure LP oracle, Monte Carlo estimation, the primal-dual
//! solver and its weakly coupled decomposition.

pub mod evaluator;
pub mod exact;
pub mod linalg;
pub mod model;
pub mod monte_carlo;
pub mod oracle;
pub mod primal_dual;
pub mod random;
pub mod rng;
pub mod simplex;
pub mod weakly_coupled;

pub use exact::{
    costs_of_policy, evaluate_policy_exact, mixing_to_stationary, occupation_exact,
    performance_difference, weighted_kl, EvalError,
};
pub use model::{
    CmdpParts, MixingPolicy, ModelError, OccupationMeasure, StationaryPolicy, TabularCmdp,
    ValueTables, Violation,
};
pub use oracle::{check_complementary_slackness, solve_lp, OracleError, OracleSolution};
