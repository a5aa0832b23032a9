//! Numerical checks of the structural results: conditions on the hazard
//! rates, properties of optimal policies and value functions, and the
//! per-iteration assumptions behind the threshold structure.
//!
//! Everything is checked on the integer grid of the truncated MDP. Rows
//! `v1 >= K - L` are skipped by the structural checks because the age cap
//! changes the Bellman operator there.

mod assumptions;
mod classify;
mod conditions;
mod structure;

use serde::Serialize;
use serde_json::Value;

use crate::mdp::State;

pub use assumptions::{capture_rvi_trace, verify_assumption1, verify_assumption2, RviTrace};
pub use classify::{classify_distribution, Classification};
pub use conditions::{
    necessary_condition_always_preempt, nopreempt_condition, sufficient_condition_always_preempt,
};
pub use structure::{
    verify_concavity, verify_threshold_in_v1, verify_zero_wait, ThresholdStructure,
};

/// Second differences above this count as a concavity violation.
pub const CONCAVITY_TOL: f64 = 1e-8;

/// Relative slack under which two action values count as tied.
pub const ACTION_TIE_TOL: f64 = 1e-9;

/// CONTINUE is (weakly) optimal when its value does not exceed SAMPLE's
/// beyond round-off.
pub(crate) fn continue_preferred(q_sample: f64, q_continue: f64) -> bool {
    q_continue <= q_sample + ACTION_TIE_TOL * q_sample.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionName {
    SufficientAlwaysPreempt,
    NoPreempt,
    NecessaryAlwaysPreempt,
    ZeroWait,
    ThresholdInV1,
    ThresholdInV1LastRow,
    Concavity,
    Assumption1,
    Assumption2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(untagged)]
pub enum Witness {
    /// A slot index `j` (hazard conditions).
    Index(usize),
    State(State),
    AtIteration {
        iteration: usize,
        state: State,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub condition: ConditionName,
    pub holds: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<Vec<f64>>,
    /// What the check actually covers, e.g. "checked on grid, n <= 57".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<Value>,
}

impl ConditionReport {
    pub(crate) fn new(condition: ConditionName, holds: bool) -> Self {
        Self {
            condition,
            holds,
            witness: None,
            intermediate: None,
            scope: None,
            details: None,
        }
    }

    pub(crate) fn with_witness(mut self, witness: Option<Witness>) -> Self {
        self.witness = witness;
        self
    }

    pub(crate) fn with_scope(mut self, scope: impl Into<String>) -> Self {
        self.scope = Some(scope.into());
        self
    }

    pub(crate) fn with_details(mut self, details: Value) -> Self {
        self.details = Some(details);
        self
    }
}
