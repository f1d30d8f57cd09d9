//! Concrete environments for the CMDP toolkit: a budget-constrained
//! multi-product inventory system and a multi-class, multi-pool queueing
//! network.

pub mod inventory;
pub mod queue;
