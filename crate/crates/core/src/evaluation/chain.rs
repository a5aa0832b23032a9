//! Exact average age from the stationary law of the policy-induced chain.
//!
//! Every non-delivery transition moves the monitor age from `v1` to
//! `min(v1 + 1, K)`; deliveries jump back to an empty-server state with
//! `v1 <= L`. The direct solver exploits this: the stationary mass of every
//! state is a linear function of the (few) delivery inflows, obtained by one
//! forward pass over the age levels, and the inflows are fixed by a small
//! consistency system. Grids beyond [`DIRECT_SOLVE_MAX_STATES`] fall back to
//! power iteration on the lazy chain.

use std::collections::{HashMap, VecDeque};

use nalgebra::DMatrix;
use serde::Serialize;

use super::{small_stationary, EvalDetail, EvalReport, Method};
use crate::error::{Error, Result};
use crate::mdp::TruncatedMdp;
use crate::policy::Policy;
use crate::queue_model::ServiceDistribution;

pub const DIRECT_SOLVE_MAX_STATES: usize = 50_000;
pub const POWER_ITERATION_TOL: f64 = 1e-12;
const POWER_ITERATION_MAX: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMethod {
    Direct,
    PowerIteration,
}

pub fn exact_average_age(policy: &Policy, d: &ServiceDistribution) -> Result<EvalReport> {
    let method = if policy.grid().len() <= DIRECT_SOLVE_MAX_STATES {
        ChainMethod::Direct
    } else {
        ChainMethod::PowerIteration
    };
    exact_average_age_with(policy, d, method)
}

pub fn exact_average_age_with(
    policy: &Policy,
    d: &ServiceDistribution,
    method: ChainMethod,
) -> Result<EvalReport> {
    let grid = policy.grid();
    if grid.support() != d.support() {
        return Err(Error::InvalidGrid(format!(
            "policy grid has L = {}, distribution has L = {}",
            grid.support(),
            d.support()
        )));
    }
    let mdp = TruncatedMdp::new(d, grid.age_cap())?;
    let chain = InducedChain::new(&mdp, policy)?;
    let pi = match method {
        ChainMethod::Direct => chain.direct_stationary(&mdp),
        ChainMethod::PowerIteration => chain.power_stationary()?,
    };

    let k = grid.age_cap();
    let mut average_age = 0.0;
    let mut cap_mass = 0.0;
    let mut stationary = Vec::with_capacity(chain.members.len());
    for (&idx, &mass) in chain.members.iter().zip(&pi) {
        let s = grid.state(idx);
        average_age += mass * f64::from(s.v1);
        if s.v1 == k {
            cap_mass += mass;
        }
        stationary.push((s, mass));
    }
    Ok(EvalReport {
        method: Method::Chain,
        average_age,
        detail: EvalDetail::Chain {
            k,
            solve: method,
            recurrent_states: chain.members.len(),
            cap_mass,
            stationary,
        },
    })
}

/// The chain restricted to the closed class reachable from `(1, E)`,
/// with local indices in canonical (level-major) order.
struct InducedChain {
    members: Vec<usize>,
    /// Successors per local state: `(local index, prob)`.
    succ: Vec<Vec<(usize, f64)>>,
}

impl InducedChain {
    fn new(mdp: &TruncatedMdp, policy: &Policy) -> Result<Self> {
        let grid = mdp.grid();
        let n = grid.len();
        let successors = |idx: usize| {
            let a = policy.action_at_index(idx);
            mdp.action_row(idx, a)
                .expect("policy tables hold feasible actions")
                .successors
                .clone()
        };

        let start = grid.reference();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(i) = queue.pop_front() {
            for (j, _) in successors(i) {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let members: Vec<usize> = (0..n).filter(|i| seen[*i]).collect();
        let local: HashMap<usize, usize> =
            members.iter().enumerate().map(|(l, g)| (*g, l)).collect();
        let succ: Vec<Vec<(usize, f64)>> = members
            .iter()
            .map(|g| successors(*g).iter().map(|(j, p)| (local[j], *p)).collect())
            .collect();

        // Every reachable state must lead back to (1, E).
        let mut preds = vec![Vec::new(); members.len()];
        for (i, row) in succ.iter().enumerate() {
            for (j, _) in row {
                preds[*j].push(i);
            }
        }
        let root = local[&start];
        let mut back = vec![false; members.len()];
        back[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(j) = queue.pop_front() {
            for &i in &preds[j] {
                if !back[i] {
                    back[i] = true;
                    queue.push_back(i);
                }
            }
        }
        if let Some(bad) = back.iter().position(|ok| !ok) {
            return Err(Error::NonErgodicChain(grid.state(members[bad])));
        }
        Ok(Self { members, succ })
    }

    fn direct_stationary(&self, mdp: &TruncatedMdp) -> Vec<f64> {
        let grid = mdp.grid();
        let m = self.members.len();
        if m == 1 {
            return vec![1.0];
        }
        let k = grid.age_cap();
        let level: Vec<u32> = self.members.iter().map(|g| grid.state(*g).v1).collect();
        let is_forward = |i: usize, j: usize| level[j] == (level[i] + 1).min(k);

        // Delivery targets: states entered by a non-forward transition.
        let mut targets: Vec<usize> = Vec::new();
        for (i, row) in self.succ.iter().enumerate() {
            for (j, _) in row {
                if !is_forward(i, *j) && !targets.contains(j) {
                    targets.push(*j);
                }
            }
        }
        targets.sort_unstable();
        let nb = targets.len();
        let target_slot: HashMap<usize, usize> =
            targets.iter().enumerate().map(|(b, j)| (*j, b)).collect();

        // coef[i] expresses pi(i) as a combination of the delivery inflows.
        let mut coef = vec![vec![0.0; nb]; m];
        for (j, b) in &target_slot {
            coef[*j][*b] += 1.0;
        }
        let cap_start = level.partition_point(|v| *v < k);
        for i in 0..cap_start {
            for (j, p) in &self.succ[i] {
                if is_forward(i, *j) && level[*j] < k {
                    let (src, dst) = split_rows(&mut coef, i, *j);
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += p * s;
                    }
                }
            }
        }
        // Cap level: pi_K = inflow + pi_K F, solved as a small dense system.
        let cap: Vec<usize> = (cap_start..m).collect();
        if !cap.is_empty() {
            let nc = cap.len();
            let mut rhs = DMatrix::<f64>::zeros(nc, nb);
            for (r, &j) in cap.iter().enumerate() {
                for b in 0..nb {
                    rhs[(r, b)] = coef[j][b];
                }
            }
            for (succ, c) in self.succ[..cap_start].iter().zip(&coef) {
                for (j, p) in succ {
                    if *j >= cap_start {
                        for b in 0..nb {
                            rhs[(*j - cap_start, b)] += p * c[b];
                        }
                    }
                }
            }
            let mut lhs = DMatrix::<f64>::identity(nc, nc);
            for &i in &cap {
                for (j, p) in &self.succ[i] {
                    if *j >= cap_start {
                        lhs[(*j - cap_start, i - cap_start)] -= p;
                    }
                }
            }
            let sol = lhs
                .lu()
                .solve(&rhs)
                .expect("cap level is left with positive probability");
            for (r, &j) in cap.iter().enumerate() {
                for b in 0..nb {
                    coef[j][b] = sol[(r, b)];
                }
            }
        }

        // Consistency: r_b = sum_i pi(i) P(i -> b) over delivery moves.
        let mut t = DMatrix::<f64>::zeros(nb, nb);
        for (i, row) in self.succ.iter().enumerate() {
            for (j, p) in row {
                if !is_forward(i, *j) {
                    let b = target_slot[j];
                    for c in 0..nb {
                        t[(c, b)] += p * coef[i][c];
                    }
                }
            }
        }
        // Each column of coef is the occupation measure of one unit of inflow,
        // which leaves through exactly one delivery: t is stochastic and the
        // inflows are its stationary law up to scale.
        let weight: Vec<f64> = (0..nb)
            .map(|c| coef.iter().map(|row| row[c]).sum())
            .collect();
        let r = if nb == 1 {
            vec![1.0]
        } else {
            small_stationary(&t)
        };
        let total: f64 = r.iter().zip(&weight).map(|(x, w)| x * w).sum();
        coef.iter()
            .map(|row| row.iter().zip(&r).map(|(c, x)| c * x).sum::<f64>() / total)
            .collect()
    }

    fn power_stationary(&self) -> Result<Vec<f64>> {
        let m = self.members.len();
        let mut pi = vec![1.0 / m as f64; m];
        let mut next = vec![0.0; m];
        for _ in 0..POWER_ITERATION_MAX {
            next.iter_mut().zip(&pi).for_each(|(n, p)| *n = 0.5 * p);
            for (i, row) in self.succ.iter().enumerate() {
                for (j, p) in row {
                    next[*j] += 0.5 * pi[i] * p;
                }
            }
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            std::mem::swap(&mut pi, &mut next);
            if delta < POWER_ITERATION_TOL {
                let s: f64 = pi.iter().sum();
                return Ok(pi.into_iter().map(|x| x / s).collect());
            }
        }
        Err(Error::NoConvergence {
            iterations: POWER_ITERATION_MAX,
            residual: f64::NAN,
        })
    }
}

/// Borrow row `src` immutably and row `dst` mutably (`src != dst`).
fn split_rows(rows: &mut [Vec<f64>], src: usize, dst: usize) -> (&[f64], &mut [f64]) {
    assert_ne!(src, dst);
    if src < dst {
        let (a, b) = rows.split_at_mut(dst);
        (&a[src], &mut b[0])
    } else {
        let (a, b) = rows.split_at_mut(src);
        (&b[0], &mut a[dst])
    }
}
