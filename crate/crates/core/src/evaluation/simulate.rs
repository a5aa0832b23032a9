//! Seeded slot-by-slot simulation.
//!
//! Each replication `r` draws from ChaCha8 seeded with `seed` on stream `r`,
//! so results depend only on `(seed, replications)`, not on scheduling.
//! The policy table is looked up with the monitor age clamped to the grid's
//! cap, but the age charged each slot is the true (uncapped) age.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{EvalDetail, EvalReport, Method};
use crate::error::{Error, Result};
use crate::mdp::{Action, State};
use crate::policy::Policy;
use crate::queue_model::ServiceDistribution;

pub const MIN_HORIZON: u64 = 1_000;

/// One inter-delivery interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CycleRecord {
    /// Generation slot of the delivered packet.
    pub generated: u64,
    /// First slot at which the monitor holds the packet.
    pub delivered: u64,
    /// Packets preempted since the previous delivery.
    pub preemptions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CycleTrace {
    pub records: Vec<CycleRecord>,
}

impl CycleTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,S_i,D_i,M_i\n");
        for (i, r) in self.records.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                i + 1,
                r.generated,
                r.delivered,
                r.preemptions
            ));
        }
        out
    }
}

/// A single simulated path.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub mean_age: f64,
    pub trace: CycleTrace,
    /// Age charged in slots `1..=horizon`, if requested.
    pub ages: Option<Vec<u64>>,
}

/// Simulates one replication starting from `(1, E)` at slot 1 (the previous
/// delivery is the packet generated at slot 0).
pub fn simulate_path(
    policy: &Policy,
    d: &ServiceDistribution,
    horizon: u64,
    seed: u64,
    stream: u64,
    record_ages: bool,
) -> SimPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let mut ages = record_ages.then(|| Vec::with_capacity(horizon as usize));
    let mut trace = CycleTrace::default();
    let mut age: u64 = 1;
    // (packet age, generation slot)
    let mut packet: Option<(u32, u64)> = None;
    let mut preemptions = 0;
    let mut total = 0.0;

    for t in 1..=horizon {
        total += age as f64;
        if let Some(a) = ages.as_mut() {
            a.push(age);
        }
        let state = State {
            v1: age.min(u64::from(u32::MAX)) as u32,
            v2: packet.map(|(k, _)| k),
        };
        let action = policy
            .action(state)
            .expect("simulated states stay on the grid rows");
        let attempt = match action {
            Action::Idle => None,
            Action::Sample => {
                if packet.is_some() {
                    preemptions += 1;
                }
                Some((0, t))
            }
            Action::Continue => packet,
        };
        match attempt {
            None => age += 1,
            Some((k, generated)) => {
                let q = d.q_at(k as usize + 1);
                if rng.random::<f64>() < q {
                    trace.records.push(CycleRecord {
                        generated,
                        delivered: t + 1,
                        preemptions,
                    });
                    preemptions = 0;
                    packet = None;
                    age = t + 1 - generated;
                } else {
                    packet = Some((k + 1, generated));
                    age += 1;
                }
            }
        }
    }
    SimPath {
        mean_age: total / horizon as f64,
        trace,
        ages,
    }
}

/// Mean age over independent replications with a 95% Student-t interval.
/// The returned trace is that of replication 0.
pub fn simulate(
    policy: &Policy,
    d: &ServiceDistribution,
    horizon: u64,
    replications: usize,
    seed: u64,
) -> Result<(EvalReport, CycleTrace)> {
    if horizon < MIN_HORIZON {
        return Err(Error::HorizonTooShort(horizon));
    }
    if replications < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 replications for an interval, got {replications}"
        )));
    }
    let mut paths: Vec<SimPath> = (0..replications as u64)
        .into_par_iter()
        .map(|r| simulate_path(policy, d, horizon, seed, r, false))
        .collect();
    let means: Vec<f64> = paths.iter().map(|p| p.mean_age).collect();

    let n = means.len() as f64;
    let mean = means.iter().sum::<f64>() / n;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    let ci_halfwidth = t * (var / n).sqrt();

    let trace = std::mem::take(&mut paths[0].trace);
    Ok((
        EvalReport {
            method: Method::MonteCarlo,
            average_age: mean,
            detail: EvalDetail::MonteCarlo {
                slots: horizon,
                replications,
                ci_halfwidth,
                seed,
                replication_means: means,
            },
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Grid;
    use crate::policy::{always_preempt, double_threshold, DoubleThresholdSpec};

    fn dist(p: &[f64]) -> ServiceDistribution {
        ServiceDistribution::new(p).unwrap()
    }

    #[test]
    fn one_slot_service_has_no_variance() {
        let d = dist(&[1.0]);
        let g = Grid::new(5, 1).unwrap();
        let (r, trace) = simulate(&always_preempt(&g), &d, 2_000, 4, 11).unwrap();
        assert_eq!(r.average_age, 1.0);
        assert_eq!(r.ci_halfwidth(), Some(0.0));
        assert_eq!(trace.records.len(), 2_000);
        assert!(trace.records.iter().all(|c| c.delivered - c.generated == 1));
    }

    #[test]
    fn deterministic_given_seed() {
        let d = dist(&[0.2, 0.3, 0.5]);
        let g = Grid::new(60, 3).unwrap();
        let p = double_threshold(DoubleThresholdSpec::new(2, 2, 3).unwrap(), &g).unwrap();
        let a = simulate(&p, &d, 5_000, 6, 7).unwrap();
        let b = simulate(&p, &d, 5_000, 6, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate(&p, &d, 5_000, 6, 8).unwrap();
        assert_ne!(a.0.average_age, c.0.average_age);
    }

    #[test]
    fn ages_follow_the_trace() {
        let d = dist(&[0.3, 0.25, 0.1, 0.3, 0.05]);
        let g = Grid::new(100, 5).unwrap();
        let p = double_threshold(DoubleThresholdSpec::new(3, 4, 5).unwrap(), &g).unwrap();
        let path = simulate_path(&p, &d, 20_000, 3, 0, true);
        let ages = path.ages.unwrap();
        let records = &path.trace.records;
        let mut latest = 0u64; // S_0 = 0
        let mut next = 0;
        for (i, age) in ages.iter().enumerate() {
            let t = i as u64 + 1;
            while next < records.len() && records[next].delivered <= t {
                latest = records[next].generated;
                next += 1;
            }
            assert_eq!(*age, t - latest, "slot {t}");
        }
        for w in records.windows(2) {
            assert!(w[0].delivered < w[1].delivered);
        }
        for r in records {
            let service = r.delivered - r.generated;
            assert!((1..=5).contains(&service));
        }
    }

    #[test]
    fn rejects_short_horizons() {
        let d = dist(&[0.5, 0.5]);
        let g = Grid::new(50, 2).unwrap();
        assert!(matches!(
            simulate(&always_preempt(&g), &d, 999, 4, 0),
            Err(Error::HorizonTooShort(999))
        ));
        assert!(simulate(&always_preempt(&g), &d, 1_000, 1, 0).is_err());
    }
}
