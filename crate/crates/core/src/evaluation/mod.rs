//! Long-run average age of a stationary policy, computed three independent
//! ways:
//!
//! - [`chain`]: stationary distribution of the induced chain on the grid;
//! - [`renewal`]: renewal-reward over inter-delivery cycles, for
//!   double-threshold policies, with no age cap at all;
//! - [`simulate`]: seeded slot-by-slot Monte Carlo with replication CIs.
//!
//! All three charge the monitor age of the state at the start of each slot,
//! matching the MDP cost `C(s, a) = v1`.

pub mod chain;
pub mod renewal;
pub mod simulate;

use serde::Serialize;

pub use chain::{exact_average_age, exact_average_age_with, ChainMethod};
pub use renewal::renewal_reward_age;
pub use simulate::{simulate, simulate_path, CycleRecord, CycleTrace, SimPath};

use crate::mdp::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Method {
    Chain,
    Renewal,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EvalDetail {
    Chain {
        #[serde(rename = "K")]
        k: u32,
        solve: ChainMethod,
        recurrent_states: usize,
        /// Stationary mass on the cap row `v1 = K`.
        cap_mass: f64,
        #[serde(skip_serializing_if = "Vec::is_empty")]
        stationary: Vec<(State, f64)>,
    },
    Renewal {
        expected_cycle_length: f64,
        expected_cycle_age_sum: f64,
        /// Stationary law of the monitor age right after a delivery,
        /// indexed 1..=L.
        post_delivery_age: Vec<f64>,
        /// Bound on the mass dropped by truncating the cycle enumeration.
        tail_bound: f64,
    },
    MonteCarlo {
        slots: u64,
        replications: usize,
        ci_halfwidth: f64,
        seed: u64,
        replication_means: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: Method,
    pub average_age: f64,
    #[serde(flatten)]
    pub detail: EvalDetail,
}

impl EvalReport {
    /// CI half-width for Monte Carlo reports.
    pub fn ci_halfwidth(&self) -> Option<f64> {
        match &self.detail {
            EvalDetail::MonteCarlo { ci_halfwidth, .. } => Some(*ci_halfwidth),
            _ => None,
        }
    }

    pub fn covers(&self, value: f64) -> bool {
        self.ci_halfwidth()
            .is_some_and(|h| (self.average_age - value).abs() <= h)
    }

    /// Drops the per-state stationary table (keeps the summary).
    pub fn without_stationary(mut self) -> Self {
        if let EvalDetail::Chain { stationary, .. } = &mut self.detail {
            stationary.clear();
        }
        self
    }
}

/// Stationary law of a small irreducible row-stochastic matrix `t`,
/// from `mu (T - I) = 0`, `sum mu = 1` as a least-squares system.
pub(crate) fn small_stationary(t: &nalgebra::DMatrix<f64>) -> Vec<f64> {
    let n = t.nrows();
    let mut a = nalgebra::DMatrix::<f64>::zeros(n + 1, n);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = t[(j, i)] - if i == j { 1.0 } else { 0.0 };
        }
        a[(n, i)] = 1.0;
    }
    let mut b = nalgebra::DVector::<f64>::zeros(n + 1);
    b[n] = 1.0;
    let svd = a.svd(true, true);
    let x = svd.solve(&b, 1e-14).expect("SVD with U and V");
    x.iter().copied().collect()
}
