//! Renewal-reward evaluation of double-threshold policies.
//!
//! Deliveries split time into cycles. A cycle starts on an empty server
//! with monitor age `d` (the age of the packet just delivered), so cycles
//! are i.i.d. given `d` and `d` itself evolves as a Markov chain on
//! `1..=L`. The cycle length and age-sum moments are obtained by pushing
//! probability mass slot by slot through the (uncapped) policy until the
//! surviving mass drops below [`RESIDUAL_MASS`]; the average age is
//! `sum_d mu_d E[age sum | d] / sum_d mu_d E[length | d]` with `mu` the
//! stationary law of the post-delivery age.

use nalgebra::DMatrix;

use super::{small_stationary, EvalDetail, EvalReport, Method};
use crate::mdp::{Action, State};
use crate::policy::DoubleThresholdSpec;
use crate::queue_model::ServiceDistribution;

pub const RESIDUAL_MASS: f64 = 1e-12;
const MAX_CYCLE_SLOTS: usize = 100_000_000;

struct CycleMoments {
    length: f64,
    age_sum: f64,
    /// Probability that the cycle ends with post-delivery age `k + 1`.
    next_age: Vec<f64>,
    tail_bound: f64,
}

fn cycle_moments(
    spec: &DoubleThresholdSpec,
    d: &ServiceDistribution,
    start_age: u32,
) -> CycleMoments {
    let l = d.support();
    // alive[k]: mass with a packet of age k in service; k = 0 means the
    // server is empty (only at the first slot of the cycle).
    let mut alive = vec![0.0; l];
    alive[0] = 1.0;
    let mut next = vec![0.0; l];
    let mut next_age = vec![0.0; l];
    let mut length = 0.0;
    let mut age_sum = 0.0;
    let mut prev_mass = 1.0;
    let mut ratio: f64 = 0.0;

    for slot in 0..MAX_CYCLE_SLOTS {
        let v1 = start_age + slot as u32;
        let mass: f64 = alive.iter().sum();
        if mass < RESIDUAL_MASS {
            break;
        }
        if slot > 0 {
            ratio = ratio.max(mass / prev_mass);
        }
        prev_mass = mass;
        length += mass;
        age_sum += mass * f64::from(v1);

        next.iter_mut().for_each(|x| *x = 0.0);
        for (k, m) in alive.iter().enumerate() {
            if *m == 0.0 {
                continue;
            }
            let state = if k == 0 {
                State::empty(v1)
            } else {
                State::busy(v1, k as u32)
            };
            match spec.action(state) {
                Action::Continue => {
                    let q = d.q_at(k + 1);
                    next_age[k] += m * q;
                    if k + 1 < l {
                        next[k + 1] += m * (1.0 - q);
                    }
                }
                _ => {
                    let q = d.q_at(1);
                    next_age[0] += m * q;
                    if l > 1 {
                        next[1] += m * (1.0 - q);
                    }
                }
            }
        }
        std::mem::swap(&mut alive, &mut next);
    }

    let residual: f64 = alive.iter().sum();
    let tail_bound = if ratio < 1.0 {
        residual / (1.0 - ratio)
    } else {
        f64::INFINITY
    };
    CycleMoments {
        length,
        age_sum,
        next_age,
        tail_bound,
    }
}

/// Average age of a double-threshold policy by renewal-reward. Does not
/// depend on any age cap.
pub fn renewal_reward_age(spec: &DoubleThresholdSpec, d: &ServiceDistribution) -> EvalReport {
    let l = d.support();
    let cycles: Vec<CycleMoments> = (1..=l as u32)
        .map(|age| cycle_moments(spec, d, age))
        .collect();

    let transition = DMatrix::from_fn(l, l, |i, j| cycles[i].next_age[j]);
    // Post-delivery ages reachable from age 1; every cycle can end with a
    // first-slot delivery, so this class is closed and irreducible.
    let mut reach = vec![false; l];
    reach[0] = true;
    let mut stack = vec![0];
    while let Some(i) = stack.pop() {
        for j in 0..l {
            if !reach[j] && transition[(i, j)] > 0.0 {
                reach[j] = true;
                stack.push(j);
            }
        }
    }
    let members: Vec<usize> = (0..l).filter(|i| reach[*i]).collect();
    let sub = DMatrix::from_fn(members.len(), members.len(), |a, b| {
        transition[(members[a], members[b])]
    });
    let mu_sub = if members.len() == 1 {
        vec![1.0]
    } else {
        small_stationary(&sub)
    };
    let mut mu = vec![0.0; l];
    for (m, x) in members.iter().zip(mu_sub) {
        mu[*m] = x;
    }

    let expected_cycle_length: f64 = mu.iter().zip(&cycles).map(|(w, c)| w * c.length).sum();
    let expected_cycle_age_sum: f64 = mu.iter().zip(&cycles).map(|(w, c)| w * c.age_sum).sum();
    let tail_bound = cycles.iter().map(|c| c.tail_bound).fold(0.0, f64::max);
    log::debug!(
        "renewal ({}, {}): tail bound {tail_bound:e}",
        spec.vth1,
        spec.vth2
    );
    EvalReport {
        method: Method::Renewal,
        average_age: expected_cycle_age_sum / expected_cycle_length,
        detail: EvalDetail::Renewal {
            expected_cycle_length,
            expected_cycle_age_sum,
            post_delivery_age: mu,
            tail_bound,
        },
    }
}
