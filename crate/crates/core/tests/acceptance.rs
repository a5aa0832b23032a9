//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the lines are always printed; the
//! process exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use aoi_preempt::analysis::{
    classify_distribution, necessary_condition_always_preempt, verify_concavity,
    verify_threshold_in_v1, verify_zero_wait, ConditionName,
};
use aoi_preempt::evaluation::{exact_average_age, renewal_reward_age, simulate};
use aoi_preempt::policy::{
    always_preempt, arafa_baseline, double_threshold, search_double_threshold,
};
use aoi_preempt::solver::{discounted_value_iteration, relative_value_iteration};
use aoi_preempt::{DoubleThresholdSpec, Grid, Policy, Result, ServiceDistribution, SolverConfig};

const TABLE_TOL: f64 = 5e-3;
const GAIN_TOL: f64 = 1e-6;
const K: u32 = 100;

/// Rows of the comparison table: pmf and the published
/// (optimal, best double-threshold, best drop-threshold-only) gains.
const TABLE: [(&[f64], [f64; 3]); 4] = [
    (&[0.4, 0.2, 0.2, 0.2], [2.4952, 2.4952, 2.5]),
    (&[0.7, 0.1, 0.2], [1.4286, 1.4286, 1.4286]),
    (&[0.05, 0.5, 0.1, 0.3, 0.05], [3.8049, 3.9026, 3.9071]),
    (&[0.3, 0.25, 0.1, 0.3, 0.05], [3.2170, 3.2170, 3.333]),
];

fn corpus() -> Vec<Vec<f64>> {
    let mut c: Vec<Vec<f64>> = TABLE.iter().map(|(p, _)| p.to_vec()).collect();
    c.extend([
        vec![0.5, 0.125, 0.125, 0.125, 0.125],
        vec![0.3, 0.175, 0.175, 0.175, 0.175],
        vec![0.4, 0.3, 0.3],
        vec![0.2, 0.3, 0.5],
        vec![0.6, 0.4],
        vec![0.9, 0.1],
        vec![1.0],
        vec![0.1, 0.0, 0.6, 0.3],
    ]);
    c
}

fn dist(p: &[f64]) -> ServiceDistribution {
    ServiceDistribution::new(p).expect("valid pmf")
}

fn chain(policy: &Policy, d: &ServiceDistribution) -> Result<f64> {
    exact_average_age(policy, d).map(|r| r.average_age)
}

/// Exact gains of the optimal, best double-threshold and best
/// drop-threshold-only policies at age cap `k`.
fn three_gains(d: &ServiceDistribution, k: u32) -> Result<[f64; 3]> {
    let grid = Grid::for_distribution(k, d)?;
    let (_, optimal) = relative_value_iteration(d, k, &SolverConfig::default())?;
    let eval = |p: &Policy| chain(p, d);
    Ok([
        chain(&optimal, d)?,
        search_double_threshold(d, &grid, eval)?.gain,
        arafa_baseline(d, &grid, eval)?.gain,
    ])
}

/// A pmf with the threshold pairs evaluated for it.
type PolicyGrid<'a> = (&'a [f64], [(u32, u32); 5]);
type Criterion = fn() -> Result<Outcome>;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Result<Outcome> {
    Ok(Outcome {
        pass,
        detail: detail.into(),
    })
}

fn table_row(row: usize) -> Result<(bool, [f64; 3], Duration)> {
    let (p, expected) = TABLE[row];
    let start = Instant::now();
    let got = three_gains(&dist(p), K)?;
    let elapsed = start.elapsed();
    let ok = got
        .iter()
        .zip(expected)
        .all(|(g, e)| (g - e).abs() <= TABLE_TOL);
    Ok((ok, got, elapsed))
}

fn fmt3(g: [f64; 3]) -> String {
    format!("{:.4} / {:.4} / {:.4}", g[0], g[1], g[2])
}

fn criterion_1() -> Result<Outcome> {
    let (ok, got, elapsed) = table_row(0)?;
    let fast = elapsed < Duration::from_secs(10);
    outcome(
        ok && fast,
        format!("{} in {:.2?} at K={K}", fmt3(got), elapsed),
    )
}

fn criterion_2() -> Result<Outcome> {
    let (ok, got, _) = table_row(1)?;
    let d = dist(TABLE[1].0);
    let ap = chain(&always_preempt(&Grid::for_distribution(K, &d)?), &d)?;
    let exact = (ap - 1.0 / 0.7).abs() < 1e-6;
    outcome(
        ok && exact,
        format!("{}; always-preempt {ap:.10} vs 1/0.7", fmt3(got)),
    )
}

fn criterion_3() -> Result<Outcome> {
    let (ok, got, _) = table_row(2)?;
    let gap = got[1] - got[0];
    outcome(ok && gap > 0.05, format!("{}; gap {gap:.4}", fmt3(got)))
}

fn criterion_4() -> Result<Outcome> {
    let (ok, got, _) = table_row(3)?;
    outcome(ok, fmt3(got))
}

fn criterion_5() -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for (p, expect) in [
        (&[0.5, 0.125, 0.125, 0.125, 0.125][..], true),
        (&[0.3, 0.175, 0.175, 0.175, 0.175][..], false),
    ] {
        let d = dist(p);
        let holds = necessary_condition_always_preempt(&d).holds;
        let c = classify_distribution(&d, K, &SolverConfig::default())?;
        let ap_optimal = (c.gains.always_preempt - c.gains.optimal).abs() <= GAIN_TOL;
        pass &= holds == expect && ap_optimal == expect;
        detail.push(format!("{p:?}: condition {holds}, AP optimal {ap_optimal}"));
    }
    outcome(pass, detail.join("; "))
}

fn two_point_gap(p: [f64; 2]) -> Result<f64> {
    let d = dist(&p);
    let grid = Grid::for_distribution(K, &d)?;
    let (_, optimal) = relative_value_iteration(&d, K, &SolverConfig::default())?;
    Ok(chain(&always_preempt(&grid), &d)? - chain(&optimal, &d)?)
}

fn criterion_6() -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for p in [[0.6, 0.4], [0.9, 0.1], [0.5, 0.5], [0.75, 0.25]] {
        let gap = two_point_gap(p)?;
        pass &= gap > 0.0;
        detail.push(format!("{p:?}: {gap:.3e}"));
    }
    // The better states are reached with probability about p2^(1/p2), so
    // for p1 close to 1 the gap is far below double precision.
    let gap = two_point_gap([0.99, 0.01])?;
    detail.push(format!(
        "[0.99, 0.01]: {gap:.3e} (below f64 resolution, not counted)"
    ));
    outcome(pass, format!("gain(AP) - gain(opt): {}", detail.join(", ")))
}

fn criterion_7() -> Result<Outcome> {
    let mut failures = Vec::new();
    let corpus = corpus();
    for p in &corpus {
        let d = dist(p);
        let (_, optimal) = relative_value_iteration(&d, K, &SolverConfig::default())?;
        if !verify_zero_wait(&optimal).holds {
            failures.push(format!("{p:?}"));
        }
    }
    outcome(
        failures.is_empty(),
        format!("{} distributions, failures: {failures:?}", corpus.len()),
    )
}

fn criterion_8() -> Result<Outcome> {
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    let corpus = corpus();
    for p in &corpus {
        let d = dist(p);
        for alpha in [0.9, 0.95, 0.99] {
            let cfg = SolverConfig::default().with_alpha(alpha);
            let v = discounted_value_iteration(&d, 80, &cfg)?;
            let r = verify_concavity(&v);
            if let Some(x) = r
                .details
                .as_ref()
                .and_then(|x| x["max_second_difference"].as_f64())
            {
                worst = worst.max(x);
            }
            if !r.holds {
                failures.push(format!("{p:?} alpha={alpha}"));
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("max second difference {worst:.2e}, failures: {failures:?}"),
    )
}

fn criterion_9() -> Result<Outcome> {
    let mut pass = true;
    let mut detail = Vec::new();
    for p in [&[0.4, 0.3, 0.3][..], &[0.2, 0.3, 0.5][..]] {
        let d = dist(p);
        let c = classify_distribution(&d, K, &SolverConfig::default())?;
        let (_, optimal) = relative_value_iteration(&d, K, &SolverConfig::default())?;
        let threshold = verify_threshold_in_v1(&optimal).overall.holds;
        let assumed = c.conditions.iter().any(|r| {
            matches!(
                r.condition,
                ConditionName::Assumption1 | ConditionName::Assumption2
            ) && r.holds
        });
        let gap = c.gains.best_double_threshold - c.gains.optimal;
        pass &= assumed && threshold && gap.abs() <= GAIN_TOL;
        detail.push(format!(
            "{p:?}: assumption {assumed}, threshold {threshold}, gap {gap:.1e}"
        ));
    }
    outcome(pass, detail.join("; "))
}

fn criterion_10() -> Result<Outcome> {
    let pairs: [PolicyGrid; 5] = [
        (&[0.4, 0.3, 0.3], [(1, 1), (2, 2), (3, 3), (5, 2), (8, 3)]),
        (&[0.2, 0.3, 0.5], [(1, 3), (2, 2), (2, 3), (4, 1), (6, 2)]),
        (
            &[0.4, 0.2, 0.2, 0.2],
            [(1, 4), (2, 3), (3, 2), (5, 4), (7, 1)],
        ),
        (
            &[0.05, 0.5, 0.1, 0.3, 0.05],
            [(1, 5), (2, 5), (3, 3), (4, 4), (6, 2)],
        ),
        (
            &[0.3, 0.25, 0.1, 0.3, 0.05],
            [(1, 2), (2, 4), (3, 5), (5, 3), (9, 5)],
        ),
    ];
    let mut worst = 0.0f64;
    let mut covered = 0;
    let mut total = 0;
    for (p, specs) in pairs {
        let d = dist(p);
        let grid = Grid::for_distribution(200, &d)?;
        for (vth1, vth2) in specs {
            let spec = DoubleThresholdSpec::new(vth1, vth2, d.support())?;
            let policy = double_threshold(spec, &grid)?;
            let exact = chain(&policy, &d)?;
            let renewal = renewal_reward_age(&spec, &d).average_age;
            worst = worst.max((exact - renewal).abs());
            let (mc, _) = simulate(&policy, &d, 20_000, 20, 2024 + total as u64)?;
            covered += usize::from(mc.covers(exact));
            total += 1;
        }
    }
    outcome(
        total >= 25 && worst < 1e-6 && covered >= 23,
        format!("{total} pairs, max |chain - renewal| {worst:.2e}, CI coverage {covered}/{total}"),
    )
}

fn criterion_11() -> Result<Outcome> {
    let mut worst = 0.0f64;
    for (p, _) in TABLE {
        let d = dist(p);
        let a = three_gains(&d, K)?;
        let b = three_gains(&d, 2 * K)?;
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs());
        }
    }
    outcome(
        worst < 1e-6,
        format!("K={K} vs K={}: max change {worst:.2e}", 2 * K),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Criterion); 11] = [
        ("table row 1", criterion_1),
        ("table row 2", criterion_2),
        ("table row 3", criterion_3),
        ("table row 4", criterion_4),
        ("necessary condition vs solver", criterion_5),
        (
            "two-point service never favours always-preempt",
            criterion_6,
        ),
        ("zero-wait", criterion_7),
        ("concavity of discounted values", criterion_8),
        ("threshold structure under the assumptions", criterion_9),
        ("chain / renewal / Monte Carlo agreement", criterion_10),
        ("age-cap robustness", criterion_11),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failed += usize::from(!pass);
        println!(
            "{} [{:>2}] {name}: {detail}",
            if pass { "PASS" } else { "FAIL" },
            i + 1
        );
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
