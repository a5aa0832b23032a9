//! One-shot verdict for a service distribution.

use serde::Serialize;

use super::{
    capture_rvi_trace, necessary_condition_always_preempt, nopreempt_condition,
    sufficient_condition_always_preempt, verify_assumption1, verify_assumption2,
    verify_threshold_in_v1, verify_zero_wait, ConditionReport,
};
use crate::error::Result;
use crate::evaluation::{exact_average_age, EvalDetail};
use crate::mdp::Grid;
use crate::policy::{
    always_preempt, arafa_baseline, search_double_threshold, DoubleThresholdSpec, Policy,
};
use crate::queue_model::ServiceDistribution;
use crate::solver::SolverConfig;

/// Gains closer than this are treated as equal.
pub const GAIN_TOL: f64 = 1e-6;

/// Smallest gap between exactly evaluated gains that is not round-off.
pub const STRICT_GAP: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gains {
    /// Exact average age of the greedy policy from value iteration.
    pub optimal: f64,
    /// Gain estimate reported by value iteration itself.
    pub value_iteration: f64,
    pub always_preempt: f64,
    pub best_double_threshold: f64,
    pub best_drop_threshold_only: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub always_preempt_optimal: bool,
    pub double_threshold_optimal: bool,
    /// `gain(always-preempt) - gain(optimal)`.
    pub always_preempt_gap: f64,
    /// `gain(best double-threshold) - gain(optimal)`.
    pub double_threshold_gap: f64,
}

/// Cross-checks between the condition reports and the solver's verdict.
/// All of them are expected to be true.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Consistency {
    /// Always-preempt is strictly worse than the optimum whenever the
    /// necessary condition fails. The gap can be far below [`GAIN_TOL`],
    /// so it is compared against [`STRICT_GAP`] instead.
    pub necessary_condition_sound: bool,
    /// The sufficient condition implies always-preempt optimal.
    pub sufficient_condition_sound: bool,
    /// Either assumption implies threshold structure and an optimal
    /// double-threshold policy.
    pub assumptions_sound: bool,
    pub optimal_policy_zero_wait: bool,
}

impl Consistency {
    pub fn all(&self) -> bool {
        self.necessary_condition_sound
            && self.sufficient_condition_sound
            && self.assumptions_sound
            && self.optimal_policy_zero_wait
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    #[serde(rename = "K")]
    pub k: u32,
    pub gains: Gains,
    pub best_double_threshold: DoubleThresholdSpec,
    pub verdict: Verdict,
    pub conditions: Vec<ConditionReport>,
    pub consistency: Consistency,
    pub consistent: bool,
    /// Stationary mass of the optimal policy on the cap row; large values
    /// mean `K` is too small.
    pub cap_mass: f64,
    pub rvi_iterations: usize,
}

fn chain_gain(policy: &Policy, d: &ServiceDistribution) -> Result<f64> {
    exact_average_age(policy, d).map(|r| r.average_age)
}

/// Solves the MDP, evaluates the structured baselines and runs every
/// checker on the result.
pub fn classify_distribution(
    d: &ServiceDistribution,
    k: u32,
    cfg: &SolverConfig,
) -> Result<Classification> {
    let grid = Grid::for_distribution(k, d)?;
    let (value, optimal, trace) = capture_rvi_trace(d, k, cfg)?;
    let optimal_report = exact_average_age(&optimal, d)?;
    let cap_mass = match optimal_report.detail {
        EvalDetail::Chain { cap_mass, .. } => cap_mass,
        _ => 0.0,
    };
    let optimal_gain = optimal_report.average_age;

    let evaluator = |p: &Policy| chain_gain(p, d);
    let ap_gain = chain_gain(&always_preempt(&grid), d)?;
    let best = search_double_threshold(d, &grid, evaluator)?;
    let drop_only = arafa_baseline(d, &grid, evaluator)?;

    let sufficient = sufficient_condition_always_preempt(d);
    let necessary = necessary_condition_always_preempt(d);
    let nopreempt = nopreempt_condition(d);
    let a1 = verify_assumption1(d, &trace);
    let a2 = verify_assumption2(d, &trace);
    let zero_wait = verify_zero_wait(&optimal);
    let threshold = verify_threshold_in_v1(&optimal);

    let ap_gap = ap_gain - optimal_gain;
    let ap_optimal = ap_gap.abs() <= GAIN_TOL;
    let dt_optimal = (best.gain - optimal_gain).abs() <= GAIN_TOL;
    let consistency = Consistency {
        necessary_condition_sound: necessary.holds || ap_gap > STRICT_GAP,
        sufficient_condition_sound: !sufficient.holds || ap_optimal,
        assumptions_sound: !(a1.holds || a2.holds) || (threshold.overall.holds && dt_optimal),
        optimal_policy_zero_wait: zero_wait.holds,
    };

    Ok(Classification {
        p: d.p().to_vec(),
        q: d.q().to_vec(),
        k,
        gains: Gains {
            optimal: optimal_gain,
            value_iteration: value.gain.unwrap_or(f64::NAN),
            always_preempt: ap_gain,
            best_double_threshold: best.gain,
            best_drop_threshold_only: drop_only.gain,
        },
        best_double_threshold: best.best,
        verdict: Verdict {
            always_preempt_optimal: ap_optimal,
            double_threshold_optimal: dt_optimal,
            always_preempt_gap: ap_gap,
            double_threshold_gap: best.gain - optimal_gain,
        },
        consistent: consistency.all(),
        consistency,
        conditions: vec![
            sufficient,
            necessary,
            nopreempt,
            a1,
            a2,
            zero_wait,
            threshold.overall,
            threshold.last_row,
        ],
        cap_mass,
        rvi_iterations: value.iterations,
    })
}
