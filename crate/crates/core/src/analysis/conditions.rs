//! Conditions on the hazard rates alone.

use super::{ConditionName, ConditionReport, Witness};
use crate::queue_model::ServiceDistribution;

fn first_exceeding_q1(d: &ServiceDistribution, from: usize) -> Option<usize> {
    let q1 = d.q_at(1);
    (from..=d.support()).find(|&j| d.q_at(j) > q1)
}

/// `q_1 >= q_j` for all `j >= 2`: always-preempt is optimal.
pub fn sufficient_condition_always_preempt(d: &ServiceDistribution) -> ConditionReport {
    let witness = first_exceeding_q1(d, 2);
    ConditionReport::new(ConditionName::SufficientAlwaysPreempt, witness.is_none())
        .with_witness(witness.map(Witness::Index))
}

/// `q_1 >= q_j` for all `j >= 3`: some double-threshold policy is optimal.
pub fn nopreempt_condition(d: &ServiceDistribution) -> ConditionReport {
    let witness = first_exceeding_q1(d, 3);
    ConditionReport::new(ConditionName::NoPreempt, witness.is_none())
        .with_witness(witness.map(Witness::Index))
}

/// Necessary condition for always-preempt to be optimal.
///
/// With `f_1 = 1/q_1`, `f_{L-1} = 1` and, for `i = L-2` down to `2`,
/// `f_i = min(1 + (1 - q_{i+1}) f_{i+1}, f_1)`, the condition is
/// `1 + (1 - q_2) f_2 >= 1/q_1`. For `L = 2` it never holds. `intermediate`
/// carries `f_1..f_{L-1}`.
pub fn necessary_condition_always_preempt(d: &ServiceDistribution) -> ConditionReport {
    let l = d.support();
    match l {
        1 => {
            return ConditionReport::new(ConditionName::NecessaryAlwaysPreempt, true)
                .with_scope("L = 1: SAMPLE is the only useful action")
        }
        2 => {
            return ConditionReport::new(ConditionName::NecessaryAlwaysPreempt, false)
                .with_scope("L = 2: always-preempt is never optimal")
        }
        _ => {}
    }
    let q1 = d.q_at(1);
    // f[i] holds f_i; index 0 unused.
    let mut f = vec![0.0; l];
    f[1] = 1.0 / q1;
    f[l - 1] = 1.0;
    for i in (2..=l - 2).rev() {
        f[i] = (1.0 + (1.0 - d.q_at(i + 1)) * f[i + 1]).min(f[1]);
    }
    let lhs = 1.0 + (1.0 - d.q_at(2)) * f[2];
    let mut report = ConditionReport::new(ConditionName::NecessaryAlwaysPreempt, lhs >= 1.0 / q1)
        .with_details(serde_json::json!({ "lhs": lhs, "rhs": 1.0 / q1 }));
    report.intermediate = Some(f[1..].to_vec());
    report
}
