//! Multi-class, multi-pool parallel-server queue in discrete time.
//!
//! Class-`i` customers arrive as Poisson(`θ_i`) batches and wait in queue
//! `X_i`; each period the scheduler sends `U_ij` of them to pool `j`, where
//! each finishes with probability `μ_ij` per period (non-preemptive). Pool
//! `j` has `N_j` servers. Waiting costs `h_i` per customer per period and
//! routing costs `r_ij` once per assignment.
//!
//! Classes interact only through the pool capacities, so relaxing those to
//! expected constraints gives a weakly coupled CMDP with one subproblem per
//! class; see [`policy`] for the subproblems and [`experiment`] for the
//! end-to-end study.

pub mod admission;
pub mod config;
pub mod dynamics;
pub mod experiment;
pub mod policy;
pub mod priority;
pub mod threshold;
pub mod transport;
pub mod vfa;

use cmdp_core::primal_dual::SolverError;
use thiserror::Error;

pub use admission::feasibility_modification;
pub use config::{CostRegime, QueueConfig};
pub use dynamics::{transition, Assignment, QueueState};
pub use experiment::{run_queue_experiment, train, QueueExperiment, QueueReport};
pub use priority::{action_set, apply_priority, PriorityAction};
pub use threshold::{threshold_scan, ThresholdPoint};
pub use transport::benchmark_assignment;
pub use vfa::quadratic_features;

#[derive(Debug, Error)]
pub enum QueueError {
    #[error("invalid queue configuration: {0}")]
    Config(String),
    #[error("{0} has the wrong shape")]
    Shape(String),
    #[error("class {class}: {sent} assigned but only {waiting} waiting")]
    Overdrawn { class: usize, sent: u32, waiting: u32 },
    #[error("pool {pool}: {used} busy servers exceed its {size}")]
    Capacity { pool: usize, used: u32, size: u32 },
    #[error("class {class} cannot be served by pool {pool}")]
    Incompatible { class: usize, pool: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
}
