//! Optimal sampling and preemption for the discrete-time age-of-information
//! problem with an error-free preemptive server.
//!
//! The crate is organised bottom-up:
//!
//! - [`queue_model`]: service-time pmf and its hazard rates.
//! - [`mdp`]: the age-capped MDP (states, actions, costs, kernels).
//! - [`solver`]: relative value iteration and discounted value iteration.
//! - [`policy`]: stationary policy tables and the structured families
//!   (always-preempt, double-threshold) with threshold search.
//! - [`evaluation`]: average age by stationary chain, renewal-reward and
//!   Monte Carlo.
//! - [`analysis`]: numerical checks of the structural results.

pub mod analysis;
pub mod error;
pub mod evaluation;
pub mod mdp;
pub mod policy;
pub mod queue_model;
pub mod solver;

pub use error::{Error, Result};
pub use mdp::{Action, Grid, State};
pub use policy::{DoubleThresholdSpec, Policy, PolicyKind};
pub use queue_model::ServiceDistribution;
pub use solver::{SolverConfig, ValueFunction};

/// Default age cap: `max(50, 20 L)`.
pub fn default_age_cap(l: usize) -> u32 {
    (20 * l as u32).max(50)
}
