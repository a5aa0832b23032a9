use thiserror::Error;

use crate::mdp::{Action, State};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("service-time pmf must be nonempty with nonnegative entries (got {0})")]
    RejectsEmptyOrNegative(String),
    #[error("service-time pmf must put positive mass on one slot (p1 = {0})")]
    RejectsZeroFirstSlot(f64),
    #[error("service-time pmf sums to {0}, expected 1")]
    RejectsUnnormalized(f64),
    #[error("slot index {k} outside support 1..={l}")]
    OutOfSupport { k: usize, l: usize },
    #[error("age cap K = {k} is smaller than support bound L = {l}")]
    RejectsKSmallerThanL { k: u32, l: u32 },
    #[error("action {action:?} is not feasible in state {state}")]
    InfeasibleAction { state: State, action: Action },
    #[error("state {state} is outside the grid with K = {k}, L = {l}")]
    StateOutsideGrid { state: State, k: u32, l: u32 },
    #[error("no convergence after {iterations} iterations (last residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid thresholds vth1 = {vth1}, vth2 = {vth2} for L = {l}")]
    InvalidThresholds { vth1: u32, vth2: u32, l: u32 },
    #[error("policy chain has no path back to (1, E) from state {0}")]
    NonErgodicChain(State),
    #[error("simulation horizon {0} is shorter than 1000 slots")]
    HorizonTooShort(u64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Stable machine-readable code, used in CLI error documents.
    pub fn code(&self) -> &'static str {
        match self {
            Error::RejectsEmptyOrNegative(_) => "RejectsEmptyOrNegative",
            Error::RejectsZeroFirstSlot(_) => "RejectsZeroFirstSlot",
            Error::RejectsUnnormalized(_) => "RejectsUnnormalized",
            Error::OutOfSupport { .. } => "OutOfSupport",
            Error::RejectsKSmallerThanL { .. } => "RejectsKSmallerThanL",
            Error::InfeasibleAction { .. } => "InfeasibleAction",
            Error::StateOutsideGrid { .. } => "StateOutsideGrid",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::InvalidGrid(_) => "InvalidGrid",
            Error::InvalidThresholds { .. } => "InvalidThresholds",
            Error::NonErgodicChain(_) => "NonErgodicChain",
            Error::HorizonTooShort(_) => "HorizonTooShort",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
