//! Experiment runner for the constrained MDP toolkit.
//!
//! Experiments are described by TOML files ([`config`]), executed by
//! [`runners::execute`], and leave CSV/JSON artifacts plus a list of
//! pass/fail [`report::Check`]s. Bundled presets cover every acceptance
//! criterion; see [`presets`].

pub mod config;
pub mod invariants;
pub mod rates;
pub mod report;
pub mod runners;
pub mod theorem;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig, ExperimentKind};
pub use report::{Check, Report};
pub use runners::execute;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("experiment is gated: {0}")]
    Gated(String),
    #[error("check could not be evaluated: {0}")]
    Check(String),
    #[error("solver: {0}")]
    Solver(#[from] cmdp_core::primal_dual::SolverError),
    #[error("oracle: {0}")]
    Oracle(#[from] cmdp_core::OracleError),
    #[error("evaluation: {0}")]
    Eval(#[from] cmdp_core::EvalError),
    #[error("model: {0}")]
    Model(#[from] cmdp_core::ModelError),
    #[error("weakly coupled model: {0}")]
    Coupled(#[from] cmdp_core::weakly_coupled::CoupledError),
    #[error("inventory: {0}")]
    Inventory(#[from] cmdp_envs::inventory::InventoryError),
    #[error("queue: {0}")]
    Queue(#[from] cmdp_envs::queue::QueueError),
    #[error("writing artifacts: {0}")]
    Io(#[from] std::io::Error),
}

/// Bundled configurations, one per named subcommand.
pub mod presets {
    use crate::config::{ConfigError, ExperimentConfig};

    /// `(subcommand, file name, contents)`.
    pub const PRESETS: &[(&str, &str, &str)] = &[
        ("oracle-check", "oracle_check.toml", include_str!("../configs/oracle_check.toml")),
        ("inventory", "inventory_paper.toml", include_str!("../configs/inventory_paper.toml")),
        ("theorem-check", "theorem_check.toml", include_str!("../configs/theorem_check.toml")),
        ("invariants", "invariants.toml", include_str!("../configs/invariants.toml")),
        ("queue-scaled", "queue_scaled.toml", include_str!("../configs/queue_scaled.toml")),
        ("queue-full", "queue_full.toml", include_str!("../configs/queue_full.toml")),
        ("decomposition-check", "decomposition_check.toml", include_str!("../configs/decomposition_check.toml")),
        ("random-cmdp", "random_cmdp.toml", include_str!("../configs/random_cmdp.toml")),
    ];

    pub fn preset(name: &str) -> Option<Result<ExperimentConfig, ConfigError>> {
        PRESETS.iter().find(|(n, _, _)| *n == name).map(|(_, _, text)| ExperimentConfig::from_toml(text))
    }

}
