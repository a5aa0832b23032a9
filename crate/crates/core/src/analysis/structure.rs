//! Structural properties of a given policy or value function.

use serde::Serialize;
use serde_json::json;

use super::{ConditionName, ConditionReport, Witness, CONCAVITY_TOL};
use crate::mdp::{Action, State};
use crate::policy::Policy;
use crate::solver::ValueFunction;

/// An empty server is never left idle.
pub fn verify_zero_wait(policy: &Policy) -> ConditionReport {
    let witness = policy
        .entries()
        .find(|(s, a)| s.is_empty() && *a == Action::Idle)
        .map(|(s, _)| Witness::State(s));
    ConditionReport::new(ConditionName::ZeroWait, witness.is_none())
        .with_witness(witness)
        .with_scope(format!(
            "all (v1, E) with v1 <= {}",
            policy.grid().age_cap()
        ))
}

/// Threshold structure in the monitor age, row by row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdStructure {
    /// Every row `v2 = 1..L-1` switches from SAMPLE to CONTINUE at most once.
    pub overall: ConditionReport,
    /// The same property on the row `v2 = L - 1` alone.
    pub last_row: ConditionReport,
    /// First `v1` choosing CONTINUE on each row `v2 = 1..L-1`, if any.
    pub thresholds: Vec<Option<u32>>,
}

/// Checks that along each row `v2`, once the policy chooses CONTINUE at some
/// `v1` it keeps doing so for every larger `v1` below the cap rows.
pub fn verify_threshold_in_v1(policy: &Policy) -> ThresholdStructure {
    let grid = policy.grid();
    let l = grid.support() as u32;
    let mut thresholds = Vec::new();
    let mut first_violation = None;
    let mut last_row_violation = None;

    for v2 in 1..l {
        let mut threshold = None;
        let mut violation = None;
        let mut v1 = v2;
        while !grid.is_cap_row(v1) {
            let s = State::busy(v1, v2);
            match (policy.action(s), threshold) {
                (Some(Action::Continue), None) => threshold = Some(v1),
                (Some(Action::Sample), Some(_)) if violation.is_none() => violation = Some(s),
                _ => {}
            }
            v1 += 1;
        }
        thresholds.push(threshold);
        if first_violation.is_none() {
            first_violation = violation;
        }
        if v2 == l - 1 {
            last_row_violation = violation;
        }
    }

    let scope = format!("v1 < {}", grid.age_cap() - l.min(grid.age_cap()));
    let details = json!({ "thresholds": thresholds });
    ThresholdStructure {
        overall: ConditionReport::new(ConditionName::ThresholdInV1, first_violation.is_none())
            .with_witness(first_violation.map(Witness::State))
            .with_scope(scope.clone())
            .with_details(details),
        last_row: ConditionReport::new(
            ConditionName::ThresholdInV1LastRow,
            last_row_violation.is_none(),
        )
        .with_witness(last_row_violation.map(Witness::State))
        .with_scope(scope),
        thresholds,
    }
}

/// Discrete concavity in `v1` of a value table: along every column (each
/// busy `v2` and the empty column) the second difference
/// `V(v1+2) - 2 V(v1+1) + V(v1)` must not exceed [`CONCAVITY_TOL`], for
/// `v1 <= K - L - 2`.
pub fn verify_concavity(value: &ValueFunction) -> ConditionReport {
    let grid = &value.grid;
    let k = grid.age_cap() as i64;
    let l = grid.support() as i64;
    let last = k - l - 2;
    let mut worst = f64::NEG_INFINITY;
    let mut witness = None;

    let columns = (1..l as u32).map(Some).chain(std::iter::once(None));
    for v2 in columns {
        let start = v2.unwrap_or(1);
        let at = |v1: u32| {
            value
                .value(State { v1, v2 })
                .expect("column stays on the grid")
        };
        let mut v1 = start;
        while i64::from(v1) <= last {
            let second = at(v1 + 2) - 2.0 * at(v1 + 1) + at(v1);
            worst = worst.max(second);
            if second > CONCAVITY_TOL && witness.is_none() {
                witness = Some(Witness::State(State { v1, v2 }));
            }
            v1 += 1;
        }
    }

    let mut report = ConditionReport::new(ConditionName::Concavity, witness.is_none())
        .with_witness(witness)
        .with_scope(format!("v1 <= {last}"));
    if worst.is_finite() {
        report = report.with_details(json!({ "max_second_difference": worst }));
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Grid;
    use crate::policy::{always_preempt, PolicyKind};

    #[test]
    fn zero_wait_witness() {
        let g = Grid::new(10, 3).unwrap();
        assert!(verify_zero_wait(&always_preempt(&g)).holds);
        let p = Policy::from_fn(g, PolicyKind::Table, |s| {
            if s == State::empty(4) {
                Action::Idle
            } else {
                Action::Sample
            }
        });
        let r = verify_zero_wait(&p);
        assert!(!r.holds);
        assert_eq!(r.witness, Some(Witness::State(State::empty(4))));
    }

    #[test]
    fn threshold_rows() {
        let g = Grid::new(20, 3).unwrap();
        let ap = verify_threshold_in_v1(&always_preempt(&g));
        assert!(ap.overall.holds && ap.last_row.holds);
        assert_eq!(ap.thresholds, vec![None, None]);

        // Row v2 = 2 flips back to SAMPLE at v1 = 9.
        let p = Policy::from_fn(g, PolicyKind::Table, |s| match s.v2 {
            None => Action::Sample,
            Some(1) if s.v1 >= 5 => Action::Continue,
            Some(2) if (4..9).contains(&s.v1) => Action::Continue,
            Some(_) => Action::Sample,
        });
        let r = verify_threshold_in_v1(&p);
        assert!(!r.overall.holds);
        assert!(!r.last_row.holds);
        assert_eq!(r.overall.witness, Some(Witness::State(State::busy(9, 2))));
        assert_eq!(r.thresholds, vec![Some(5), Some(4)]);
    }
}
