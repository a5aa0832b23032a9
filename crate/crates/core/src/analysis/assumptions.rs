//! Per-iteration checks on the value-iteration sequence.
//!
//! Both assumptions quantify over every iteration and over a continuous
//! monitor age. Here they are checked on the iterations that relative value
//! iteration actually performs, on the integer grid, below the cap rows.

use serde_json::json;

use super::{continue_preferred, ConditionName, ConditionReport, Witness};
use crate::error::Result;
use crate::mdp::{Action, Grid, State, TruncatedMdp};
use crate::policy::Policy;
use crate::queue_model::ServiceDistribution;
use crate::solver::{
    relative_value_iteration_with, IterationObserver, IterationSnapshot, SolverConfig,
    ValueFunction,
};

/// Greedy preferences recorded at every iteration of relative value
/// iteration: `prefers_continue[n][idx]` is true when CONTINUE is (weakly)
/// greedy at busy state `idx` in iteration `n + 1`.
#[derive(Debug, Clone)]
pub struct RviTrace {
    grid: Grid,
    prefers_continue: Vec<Vec<bool>>,
}

impl RviTrace {
    pub fn new(grid: Grid) -> Self {
        Self {
            grid,
            prefers_continue: Vec::new(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn iterations(&self) -> usize {
        self.prefers_continue.len()
    }

    /// Whether CONTINUE is greedy at `s` in iteration `n` (1-based).
    pub fn continue_at(&self, n: usize, s: State) -> bool {
        self.grid
            .index(s)
            .is_some_and(|idx| self.prefers_continue[n - 1][idx])
    }

    /// First `v1 >= v2` below the cap rows where CONTINUE is greedy on row
    /// `v2` in iteration `n`.
    pub fn crossing(&self, n: usize, v2: u32) -> Option<u32> {
        (v2..)
            .take_while(|v1| !self.grid.is_cap_row(*v1))
            .find(|v1| self.continue_at(n, State::busy(*v1, v2)))
    }

    fn scope(&self) -> String {
        format!("checked on grid, n <= {}", self.iterations())
    }
}

impl IterationObserver for RviTrace {
    fn observe(&mut self, snapshot: &IterationSnapshot<'_>) {
        let row = (0..self.grid.len())
            .map(|idx| {
                match (
                    snapshot.q(idx, Action::Sample),
                    snapshot.q(idx, Action::Continue),
                ) {
                    (Some(qs), Some(qc)) => continue_preferred(qs, qc),
                    _ => false,
                }
            })
            .collect();
        self.prefers_continue.push(row);
    }
}

/// Runs relative value iteration while recording the greedy preferences.
pub fn capture_rvi_trace(
    d: &ServiceDistribution,
    k: u32,
    cfg: &SolverConfig,
) -> Result<(ValueFunction, Policy, RviTrace)> {
    let mdp = TruncatedMdp::new(d, k)?;
    let mut trace = RviTrace::new(mdp.grid().clone());
    let (value, policy) = relative_value_iteration_with(&mdp, cfg, None, Some(&mut trace))?;
    Ok((value, policy, trace))
}

/// Nondecreasing hazards on `1..L-1`, and at every iteration the states
/// where CONTINUE is greedy form an up-set in `v2` for each fixed `v1`.
pub fn verify_assumption1(d: &ServiceDistribution, trace: &RviTrace) -> ConditionReport {
    let l = d.support();
    let hazard_decrease = (2..l).find(|&j| d.q_at(j) < d.q_at(j - 1));

    let grid = trace.grid();
    let mut witness = hazard_decrease.map(Witness::Index);
    let mut monotone = true;
    'outer: for n in 1..=trace.iterations() {
        let mut v1 = 1;
        while !grid.is_cap_row(v1) {
            let mut seen = false;
            for v2 in 1..=grid.max_packet_age(v1) {
                let cont = trace.continue_at(n, State::busy(v1, v2));
                if seen && !cont {
                    monotone = false;
                    if witness.is_none() {
                        witness = Some(Witness::AtIteration {
                            iteration: n,
                            state: State::busy(v1, v2),
                        });
                    }
                    break 'outer;
                }
                seen |= cont;
            }
            v1 += 1;
        }
    }

    ConditionReport::new(
        ConditionName::Assumption1,
        hazard_decrease.is_none() && monotone,
    )
    .with_witness(witness)
    .with_scope(trace.scope())
    .with_details(json!({
        "hazard_nondecreasing": hazard_decrease.is_none(),
        "continue_monotone_in_v2": monotone,
    }))
}

/// Ordering of the first crossings between consecutive iterations.
///
/// With `c(n, v2)` the first grid `v1 >= v2` where CONTINUE is greedy on
/// row `v2` at iteration `n` (ties count), and `x1 = c(n, v2) - v2`:
/// - row 1 at `n - 1`: `0 <= c(n-1, 1) - 1 <= x1 + v2`;
/// - row `v2 + 1` at `n - 1`: `0 <= c(n-1, v2+1) - v2 - 1 <= x1`;
/// - no crossing at `n` implies no crossing on either row at `n - 1`.
///
/// The row `v2 + 1` is skipped when `v2 = L - 1`. The raw crossing table is
/// returned in `details.crossings`, one row per iteration.
pub fn verify_assumption2(d: &ServiceDistribution, trace: &RviTrace) -> ConditionReport {
    let l = d.support() as u32;
    let iterations = trace.iterations();
    let crossings: Vec<Vec<Option<u32>>> = (1..=iterations)
        .map(|n| (1..l).map(|v2| trace.crossing(n, v2)).collect())
        .collect();
    let at = |n: usize, v2: u32| crossings[n - 1][(v2 - 1) as usize];

    let mut witness = None;
    'outer: for n in 2..=iterations {
        for v2 in 1..l {
            let c = at(n, v2);
            let c1 = at(n - 1, 1);
            let next = (v2 + 1 < l).then(|| at(n - 1, v2 + 1)).flatten();
            let ok = match c {
                None => c1.is_none() && next.is_none(),
                Some(c) => {
                    let x1 = c - v2;
                    c1.is_none_or(|c1| c1 >= 1 && c1 - 1 <= x1 + v2)
                        && next.is_none_or(|cn| cn > v2 && cn - v2 - 1 <= x1)
                }
            };
            if !ok {
                witness = Some(Witness::AtIteration {
                    iteration: n,
                    state: State::busy(c.unwrap_or(v2), v2),
                });
                break 'outer;
            }
        }
    }

    ConditionReport::new(ConditionName::Assumption2, witness.is_none())
        .with_witness(witness)
        .with_scope(trace.scope())
        .with_details(json!({
            "crossing": "first v1 >= v2 with Q(CONTINUE) <= Q(SAMPLE)",
            "crossings": crossings,
        }))
}
