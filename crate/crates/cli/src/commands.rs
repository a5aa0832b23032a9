use std::fs;
use std::path::Path;

use aoi_preempt::analysis::{
    capture_rvi_trace, classify_distribution, necessary_condition_always_preempt,
    nopreempt_condition, sufficient_condition_always_preempt, verify_assumption1,
    verify_assumption2, verify_concavity, verify_threshold_in_v1, verify_zero_wait,
    ConditionReport,
};
use aoi_preempt::evaluation::{
    exact_average_age, renewal_reward_age, simulate, EvalDetail, EvalReport,
};
use aoi_preempt::policy::{
    always_preempt, arafa_baseline, double_threshold, search_double_threshold,
};
use aoi_preempt::solver::{
    discounted_value_iteration, extract_policy, relative_value_iteration, SolverReport,
};
use aoi_preempt::{
    default_age_cap, mdp::TruncatedMdp, DoubleThresholdSpec, Grid, Policy, ServiceDistribution,
    SolverConfig,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::{
    CheckArgs, CheckName, Common, DiscountedArgs, EvaluateArgs, Format, PolicySource,
    ReproduceArgs, SimulateArgs, SolveArgs,
};
use crate::output::{emit, fmt, table, to_json, Failure};

/// Chain and renewal estimates further apart than this fail `evaluate`.
const METHOD_AGREEMENT_TOL: f64 = 1e-4;
/// Allowed distance from the published table.
const TABLE_TOL: f64 = 5e-3;
const GAIN_TOL: f64 = 1e-6;

/// `Ok(true)` maps to exit status 0, `Ok(false)` to 1.
pub type Outcome = Result<bool, Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| {
        Failure::new("Io", format!("cannot read {}: {e}", path.display()))
            .with_context("path", path.display().to_string())
    })
}

fn distribution(common: &Common) -> Result<ServiceDistribution, Failure> {
    match (&common.dist.p, &common.dist.dist_file) {
        (Some(p), _) => Ok(ServiceDistribution::new(p)?),
        (None, Some(path)) => Ok(ServiceDistribution::from_json(&read(path)?)?),
        (None, None) => unreachable!("clap requires a distribution source"),
    }
}

fn age_cap(common: &Common, d: &ServiceDistribution) -> u32 {
    common.k.unwrap_or_else(|| default_age_cap(d.support()))
}

fn solver_config(common: &Common) -> SolverConfig {
    SolverConfig::default()
        .with_tol(common.tol)
        .with_max_iterations(common.max_iterations)
}

fn chain_gain(policy: &Policy, d: &ServiceDistribution) -> aoi_preempt::Result<f64> {
    exact_average_age(policy, d).map(|r| r.average_age)
}

fn cap_mass(report: &EvalReport) -> f64 {
    match report.detail {
        EvalDetail::Chain { cap_mass, .. } => cap_mass,
        _ => 0.0,
    }
}

#[derive(Serialize)]
struct SolveDocument {
    distribution: ServiceDistribution,
    #[serde(flatten)]
    report: SolverReport,
    /// Stationary mass of the optimal policy on the row `v1 = K`.
    cap_mass: f64,
}

pub fn solve(args: &SolveArgs) -> Outcome {
    let common = &args.common;
    let d = distribution(common)?;
    let k = age_cap(common, &d);
    let cfg = solver_config(common);
    let (value, policy) = relative_value_iteration(&d, k, &cfg)?;
    let eval = exact_average_age(&policy, &d)?;
    let cap_mass = cap_mass(&eval);
    if cap_mass > 1e-6 {
        log::warn!("stationary mass {cap_mass:e} on the age cap; consider a larger --K");
    }
    let gain = value.gain.expect("average-cost solve has a gain");
    let doc = SolveDocument {
        distribution: d,
        report: SolverReport::new(&value, &policy, &cfg),
        cap_mass,
    };
    let summary = format!("gain {gain:.10}");
    let text = match common.format {
        Format::Json => to_json(&doc),
        Format::Csv => value.to_csv(),
        Format::Table => {
            let thresholds = verify_threshold_in_v1(&policy).thresholds;
            let mut rows = vec![
                vec!["gain".into(), fmt(gain)],
                vec!["iterations".into(), value.iterations.to_string()],
                vec![
                    "span residual".into(),
                    format!("{:.3e}", value.span_residual),
                ],
                vec!["K".into(), k.to_string()],
                vec!["cap mass".into(), format!("{cap_mass:.3e}")],
            ];
            for (i, t) in thresholds.iter().enumerate() {
                let cell = t.map_or("never".to_string(), |v| format!("v1 >= {v}"));
                rows.push(vec![format!("CONTINUE at v2 = {}", i + 1), cell]);
            }
            table(&["quantity", "value"], &rows)
        }
    };
    emit(common.out.as_deref(), &text, &summary)?;
    Ok(true)
}

pub fn solve_discounted(args: &DiscountedArgs) -> Outcome {
    let common = &args.common;
    let d = distribution(common)?;
    let k = age_cap(common, &d);
    let cfg = solver_config(common).with_alpha(args.alpha);
    let value = discounted_value_iteration(&d, k, &cfg)?;
    let mdp = TruncatedMdp::new(&d, k)?;
    let policy = extract_policy(&value, &mdp);
    let start = value.values[value.grid.reference()];
    let doc = json!({
        "distribution": d,
        "report": SolverReport::new(&value, &policy, &cfg),
    });
    let summary = format!("V(1:E) {start:.10}");
    let text = match common.format {
        Format::Json => to_json(&doc),
        Format::Csv => value.to_csv(),
        Format::Table => table(
            &["quantity", "value"],
            &[
                vec!["alpha".into(), args.alpha.to_string()],
                vec!["V(1:E)".into(), fmt(start)],
                vec!["iterations".into(), value.iterations.to_string()],
                vec!["K".into(), k.to_string()],
            ],
        ),
    };
    emit(common.out.as_deref(), &text, &summary)?;
    Ok(true)
}

/// The policy and, when it is a double-threshold policy, its thresholds.
fn load_policy(
    source: &PolicySource,
    grid: &Grid,
) -> Result<(Policy, Option<DoubleThresholdSpec>), Failure> {
    if source.always_preempt {
        // Always-preempt is the double-threshold policy that drops every
        // packet after one slot.
        return Ok((
            always_preempt(grid),
            Some(DoubleThresholdSpec { vth1: 1, vth2: 1 }),
        ));
    }
    if let Some(t) = &source.double_threshold {
        let spec = DoubleThresholdSpec::new(t[0], t[1], grid.support())?;
        return Ok((double_threshold(spec, grid)?, Some(spec)));
    }
    let path = source
        .table
        .as_deref()
        .expect("clap requires a policy source");
    let doc: Value = serde_json::from_str(&read(path)?).map_err(|e| {
        Failure::new("InvalidConfig", format!("policy JSON: {e}"))
            .with_context("path", path.display().to_string())
    })?;
    // Accept the bare state-to-action map that `solve` writes as "policy".
    let doc = if doc.get("kind").is_some() {
        doc
    } else if let Some(map) = doc.get("policy") {
        json!({ "kind": "table", "actions": map })
    } else {
        json!({ "kind": "table", "actions": doc })
    };
    Ok((Policy::from_json(&doc, grid)?, None))
}

pub fn evaluate(args: &EvaluateArgs) -> Outcome {
    let common = &args.common;
    let d = distribution(common)?;
    let grid = Grid::for_distribution(age_cap(common, &d), &d)?;
    let (policy, spec) = load_policy(&args.policy, &grid)?;

    let chain = exact_average_age(&policy, &d)?.without_stationary();
    let renewal = spec.map(|s| renewal_reward_age(&s, &d));
    let simulated = if args.simulate {
        let s = &args.sim;
        Some(simulate(&policy, &d, s.horizon, s.replications, s.seed)?.0)
    } else {
        None
    };

    let delta = renewal.as_ref().map(|r| chain.average_age - r.average_age);
    let covers = simulated.as_ref().map(|m| m.covers(chain.average_age));
    let mut reports = vec![&chain];
    reports.extend(renewal.as_ref());
    reports.extend(simulated.as_ref());
    let doc = json!({
        "distribution": d,
        "policy": policy.to_json(),
        "reports": reports,
        "chain_minus_renewal": delta,
        "simulation_covers_chain": covers,
    });

    let summary = format!("average age {:.10}", chain.average_age);
    let text = match common.format {
        Format::Json => to_json(&doc),
        Format::Csv => {
            let mut s = String::from("method,average_age,ci_halfwidth\n");
            for r in &reports {
                let ci = r
                    .ci_halfwidth()
                    .map_or(String::new(), |h| format!("{h:.15e}"));
                s += &format!(
                    "{},{:.15e},{ci}\n",
                    json!(r.method).as_str().unwrap_or(""),
                    r.average_age
                );
            }
            s
        }
        Format::Table => {
            let rows: Vec<Vec<String>> = reports
                .iter()
                .map(|r| {
                    vec![
                        json!(r.method).as_str().unwrap_or("").to_string(),
                        fmt(r.average_age),
                        r.ci_halfwidth().map_or("-".into(), |h| format!("± {h:.6}")),
                    ]
                })
                .collect();
            table(&["method", "average age", "95% CI"], &rows)
        }
    };
    emit(common.out.as_deref(), &text, &summary)?;

    if let Some(delta) = delta.filter(|x| x.abs() > METHOD_AGREEMENT_TOL) {
        return Err(Failure::new(
            "MethodDisagreement",
            format!("chain and renewal differ by {delta:e}"),
        )
        .with_context("chain", chain.average_age)
        .with_context("renewal", chain.average_age - delta));
    }
    Ok(true)
}

pub fn search(common: &Common) -> Outcome {
    let d = distribution(common)?;
    let grid = Grid::for_distribution(age_cap(common, &d), &d)?;
    let eval = |p: &Policy| chain_gain(p, &d);
    let best = search_double_threshold(&d, &grid, eval)?;
    let baseline = arafa_baseline(&d, &grid, eval)?;
    let doc = json!({
        "distribution": d,
        "K": grid.age_cap(),
        "double_threshold": {
            "vth1": best.best.vth1,
            "vth2": best.best.vth2,
            "gain": best.gain,
            "vth1_max": best.vth1_max,
        },
        "drop_threshold_only": {
            "vth2": baseline.best.vth2,
            "gain": baseline.gain,
        },
        "surface": best.surface,
    });
    let summary = format!(
        "double-threshold ({}, {}) gain {:.10}",
        best.best.vth1, best.best.vth2, best.gain
    );
    let text = match common.format {
        Format::Json => to_json(&doc),
        Format::Csv => best.surface_csv(),
        Format::Table => table(
            &["family", "vth1", "vth2", "gain"],
            &[
                vec![
                    "double-threshold".into(),
                    best.best.vth1.to_string(),
                    best.best.vth2.to_string(),
                    fmt(best.gain),
                ],
                vec![
                    "drop-threshold only".into(),
                    "1".into(),
                    baseline.best.vth2.to_string(),
                    fmt(baseline.gain),
                ],
            ],
        ),
    };
    emit(common.out.as_deref(), &text, &summary)?;
    Ok(true)
}

fn condition_text(r: &ConditionReport, format: Format) -> String {
    let witness = r.witness.map(|w| json!(w).to_string()).unwrap_or_default();
    let name = json!(r.condition).as_str().unwrap_or("").to_string();
    match format {
        Format::Json => to_json(r),
        Format::Csv => format!(
            "condition,holds,witness\n{name},{},{}\n",
            r.holds,
            witness.replace(',', ";")
        ),
        Format::Table => {
            let mut rows = vec![
                vec!["condition".into(), name],
                vec!["holds".into(), r.holds.to_string()],
            ];
            if !witness.is_empty() {
                rows.push(vec!["witness".into(), witness]);
            }
            if let Some(scope) = &r.scope {
                rows.push(vec!["scope".into(), scope.clone()]);
            }
            table(&["field", "value"], &rows)
        }
    }
}

pub fn check(args: &CheckArgs) -> Outcome {
    let common = &args.common;
    let d = distribution(common)?;
    let k = age_cap(common, &d);
    let cfg = solver_config(common);

    let (holds, text) = match args.which {
        CheckName::Classify => {
            let c = classify_distribution(&d, k, &cfg)?;
            let text = match common.format {
                Format::Json => to_json(&c),
                _ => {
                    let mut rows = vec![
                        vec!["optimal gain".into(), fmt(c.gains.optimal)],
                        vec!["always-preempt gain".into(), fmt(c.gains.always_preempt)],
                        vec![
                            "double-threshold gain".into(),
                            fmt(c.gains.best_double_threshold),
                        ],
                        vec![
                            "drop-threshold-only gain".into(),
                            fmt(c.gains.best_drop_threshold_only),
                        ],
                    ];
                    for r in &c.conditions {
                        rows.push(vec![
                            json!(r.condition).as_str().unwrap_or("").to_string(),
                            r.holds.to_string(),
                        ]);
                    }
                    rows.push(vec!["consistent".into(), c.consistent.to_string()]);
                    if common.format == Format::Csv {
                        let mut s = String::from("field,value\n");
                        for r in rows {
                            s += &format!("{},{}\n", r[0], r[1]);
                        }
                        s
                    } else {
                        table(&["field", "value"], &rows)
                    }
                }
            };
            (c.consistent, text)
        }
        CheckName::Threshold => {
            let (_, policy) = relative_value_iteration(&d, k, &cfg)?;
            let t = verify_threshold_in_v1(&policy);
            let text = match common.format {
                Format::Json => to_json(&t),
                f => condition_text(&t.overall, f),
            };
            (t.overall.holds, text)
        }
        which => {
            let report = match which {
                CheckName::Sufficient => sufficient_condition_always_preempt(&d),
                CheckName::Necessary => necessary_condition_always_preempt(&d),
                CheckName::Nopreempt => nopreempt_condition(&d),
                CheckName::ZeroWait => verify_zero_wait(&relative_value_iteration(&d, k, &cfg)?.1),
                CheckName::Concavity => verify_concavity(&discounted_value_iteration(
                    &d,
                    k,
                    &cfg.with_alpha(args.alpha),
                )?),
                CheckName::Assumption1 | CheckName::Assumption2 => {
                    let (_, _, trace) = capture_rvi_trace(&d, k, &cfg)?;
                    if which == CheckName::Assumption1 {
                        verify_assumption1(&d, &trace)
                    } else {
                        verify_assumption2(&d, &trace)
                    }
                }
                CheckName::Classify | CheckName::Threshold => unreachable!(),
            };
            (report.holds, condition_text(&report, common.format))
        }
    };
    let summary = format!("holds {holds}");
    emit(common.out.as_deref(), &text, &summary)?;
    Ok(holds)
}

/// Published comparison table: pmf and the gains of the optimal, best
/// double-threshold and best drop-threshold-only policies.
const TABLE: [(&[f64], [f64; 3]); 4] = [
    (&[0.4, 0.2, 0.2, 0.2], [2.4952, 2.4952, 2.5]),
    (&[0.7, 0.1, 0.2], [1.4286, 1.4286, 1.4286]),
    (&[0.05, 0.5, 0.1, 0.3, 0.05], [3.8049, 3.9026, 3.9071]),
    (&[0.3, 0.25, 0.1, 0.3, 0.05], [3.2170, 3.2170, 3.333]),
];

/// Examples for the necessary condition: pmf and whether always-preempt
/// is optimal.
const NECESSARY: [(&[f64], bool); 2] = [
    (&[0.5, 0.125, 0.125, 0.125, 0.125], true),
    (&[0.3, 0.175, 0.175, 0.175, 0.175], false),
];

const POLICIES: [&str; 3] = ["optimal", "double_threshold", "drop_threshold_only"];

#[derive(Serialize)]
struct Cell {
    p: Vec<f64>,
    policy: &'static str,
    published: f64,
    computed: f64,
    delta: f64,
    ok: bool,
}

#[derive(Serialize)]
struct NecessaryRow {
    p: Vec<f64>,
    condition_holds: bool,
    always_preempt_optimal: bool,
    expected: bool,
    ok: bool,
}

pub fn reproduce(args: &ReproduceArgs) -> Outcome {
    let cfg = SolverConfig::default().with_tol(args.tol);
    let mut cells = Vec::new();
    for (p, published) in TABLE {
        let d = ServiceDistribution::new(p)?;
        let grid = Grid::for_distribution(args.k, &d)?;
        let (_, optimal) = relative_value_iteration(&d, args.k, &cfg)?;
        let eval = |pol: &Policy| chain_gain(pol, &d);
        let computed = [
            chain_gain(&optimal, &d)?,
            search_double_threshold(&d, &grid, eval)?.gain,
            arafa_baseline(&d, &grid, eval)?.gain,
        ];
        for ((policy, published), computed) in POLICIES.into_iter().zip(published).zip(computed) {
            let delta = computed - published;
            cells.push(Cell {
                p: p.to_vec(),
                policy,
                published,
                computed,
                delta,
                ok: delta.abs() <= TABLE_TOL,
            });
        }
    }
    let mut necessary = Vec::new();
    for (p, expected) in NECESSARY {
        let d = ServiceDistribution::new(p)?;
        let grid = Grid::for_distribution(args.k, &d)?;
        let (_, optimal) = relative_value_iteration(&d, args.k, &cfg)?;
        let gap = chain_gain(&always_preempt(&grid), &d)? - chain_gain(&optimal, &d)?;
        let condition_holds = necessary_condition_always_preempt(&d).holds;
        let always_preempt_optimal = gap.abs() <= GAIN_TOL;
        necessary.push(NecessaryRow {
            p: p.to_vec(),
            condition_holds,
            always_preempt_optimal,
            expected,
            ok: condition_holds == expected && always_preempt_optimal == expected,
        });
    }
    let all_match = cells.iter().all(|c| c.ok) && necessary.iter().all(|r| r.ok);
    let doc = json!({
        "K": args.k,
        "tolerance": TABLE_TOL,
        "cells": cells,
        "necessary_condition": necessary,
        "all_match": all_match,
    });

    let text = match args.format {
        Format::Json => to_json(&doc),
        Format::Csv => {
            let mut s = String::from("p,policy,published,computed,delta,ok\n");
            for c in &cells {
                s += &format!(
                    "\"{:?}\",{},{},{:.15e},{:.3e},{}\n",
                    c.p, c.policy, c.published, c.computed, c.delta, c.ok
                );
            }
            s
        }
        Format::Table => {
            let rows: Vec<Vec<String>> = cells
                .iter()
                .map(|c| {
                    vec![
                        format!("{:?}", c.p),
                        c.policy.to_string(),
                        format!("{}", c.published),
                        format!("{:.4}", c.computed),
                        format!("{:+.1e}", c.delta),
                        if c.ok { "ok" } else { "MISMATCH" }.to_string(),
                    ]
                })
                .collect();
            let mut s = table(
                &["p", "policy", "published", "computed", "delta", ""],
                &rows,
            );
            s.push('\n');
            let rows: Vec<Vec<String>> = necessary
                .iter()
                .map(|r| {
                    vec![
                        format!("{:?}", r.p),
                        r.condition_holds.to_string(),
                        r.always_preempt_optimal.to_string(),
                        if r.ok { "ok" } else { "MISMATCH" }.to_string(),
                    ]
                })
                .collect();
            s += &table(
                &["p", "necessary condition", "always-preempt optimal", ""],
                &rows,
            );
            s
        }
    };
    let summary = format!("all cells match: {all_match}");
    emit(args.out.as_deref(), &text, &summary)?;

    if !all_match {
        let bad: Vec<String> = cells
            .iter()
            .filter(|c| !c.ok)
            .map(|c| format!("{:?} {}", c.p, c.policy))
            .chain(
                necessary
                    .iter()
                    .filter(|r| !r.ok)
                    .map(|r| format!("{:?} necessary condition", r.p)),
            )
            .collect();
        return Err(Failure::new(
            "ReproductionMismatch",
            format!("{} cells differ", bad.len()),
        )
        .with_context("cells", bad));
    }
    Ok(true)
}

pub fn simulate_cmd(args: &SimulateArgs) -> Outcome {
    let common = &args.common;
    let d = distribution(common)?;
    let grid = Grid::for_distribution(age_cap(common, &d), &d)?;
    let (policy, _) = load_policy(&args.policy, &grid)?;
    let s = &args.sim;
    let (report, trace) = simulate(&policy, &d, s.horizon, s.replications, s.seed)?;
    let half = report.ci_halfwidth().unwrap_or(0.0);
    let summary = format!("mean age {:.10} ± {half:.10}", report.average_age);
    let text = match common.format {
        Format::Json => to_json(&json!({
            "distribution": d,
            "policy": policy.to_json(),
            "report": report,
            "deliveries_in_first_replication": trace.records.len(),
        })),
        Format::Csv => trace.to_csv(),
        Format::Table => table(
            &["quantity", "value"],
            &[
                vec!["mean age".into(), fmt(report.average_age)],
                vec!["95% CI half-width".into(), fmt(half)],
                vec!["replications".into(), s.replications.to_string()],
                vec!["slots".into(), s.horizon.to_string()],
                vec![
                    "deliveries (replication 0)".into(),
                    trace.records.len().to_string(),
                ],
            ],
        ),
    };
    emit(common.out.as_deref(), &text, &summary)?;
    Ok(true)
}
