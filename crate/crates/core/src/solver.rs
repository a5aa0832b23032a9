//! Dynamic programming on the truncated MDP.
//!
//! Relative value iteration for the average-age criterion:
//!
//! ```text
//! V_n(s) = min_a { C(s, a) + sum_s' P_a(s, s'; K) h_{n-1}(s') }
//! h_n(s) = V_n(s) - V_n((1, E))
//! ```
//!
//! stopped when the span of the Bellman residual `V_n - h_{n-1}` falls
//! below `tol`; the gain is the midpoint of that residual's range.
//!
//! Discounted value iteration iterates
//! `V_{a,n}(s) = min_a { C(s, a) + alpha sum_s' P_a(s, s'; K) V_{a,n-1}(s') }`
//! from zero. Both use synchronous sweeps so every iteration exposes a
//! well-defined snapshot to observers.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::mdp::{Action, Grid, State, TruncatedMdp};
use crate::policy::Policy;
use crate::queue_model::ServiceDistribution;

/// Sweeps over grids at least this large run on the rayon pool.
const PARALLEL_SWEEP_MIN_STATES: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Span (RVI) or sup-norm (discounted) convergence threshold.
    pub tol: f64,
    pub max_iterations: usize,
    /// Discount factor for [`discounted_value_iteration`].
    pub alpha: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iterations: 1_000_000,
            alpha: 0.9,
        }
    }
}

impl SolverConfig {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    fn validate(&self, discounted: bool) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "tol must be > 0, got {}",
                self.tol
            )));
        }
        if discounted && !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "discount must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// What an observer sees after sweep `iteration` (1-based).
pub struct IterationSnapshot<'a> {
    pub iteration: usize,
    pub mdp: &'a TruncatedMdp,
    /// Action values per state, aligned with `mdp.actions(idx)`.
    pub q_values: &'a [[f64; 2]],
    /// `V_n`.
    pub values: &'a [f64],
    /// Span (RVI) or sup-norm (discounted) of this sweep's change.
    pub residual: f64,
}

impl IterationSnapshot<'_> {
    pub fn q(&self, idx: usize, a: Action) -> Option<f64> {
        self.mdp
            .actions(idx)
            .iter()
            .position(|r| r.action == a)
            .map(|i| self.q_values[idx][i])
    }
}

pub trait IterationObserver {
    fn observe(&mut self, snapshot: &IterationSnapshot<'_>);
}

/// Per-state values on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub reference_state: State,
    /// Average-age estimate; `None` for discounted value functions.
    pub gain: Option<f64>,
    /// Discount factor; `None` for relative value functions.
    pub alpha: Option<f64>,
    pub iterations: usize,
    pub span_residual: f64,
}

impl ValueFunction {
    pub fn value(&self, s: State) -> Option<f64> {
        self.grid.index(s).map(|i| self.values[i])
    }

    pub fn values_json(&self) -> Value {
        let mut map = Map::new();
        for (s, v) in self.grid.states().zip(&self.values) {
            map.insert(s.to_string(), Value::from(*v));
        }
        Value::Object(map)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("v1,v2,value\n");
        for (s, v) in self.grid.states().zip(&self.values) {
            let v2 = s.v2.map_or("E".to_string(), |x| x.to_string());
            out.push_str(&format!("{},{},{:.15e}\n", s.v1, v2, v));
        }
        out
    }
}

/// Serialized solver report.
#[derive(Debug, Clone, Serialize)]
pub struct SolverReport {
    pub gain: Option<f64>,
    pub alpha: Option<f64>,
    pub iterations: usize,
    pub span_residual: f64,
    #[serde(rename = "K")]
    pub k: u32,
    #[serde(rename = "L")]
    pub l: usize,
    pub tol: f64,
    pub policy: Value,
    pub value: Value,
}

impl SolverReport {
    pub fn new(v: &ValueFunction, policy: &Policy, cfg: &SolverConfig) -> Self {
        Self {
            gain: v.gain,
            alpha: v.alpha,
            iterations: v.iterations,
            span_residual: v.span_residual,
            k: v.grid.age_cap(),
            l: v.grid.support(),
            tol: cfg.tol,
            policy: policy.table_json(),
            value: v.values_json(),
        }
    }
}

fn lookahead(mdp: &TruncatedMdp, idx: usize, discount: f64, next: &[f64]) -> [f64; 2] {
    let rows = mdp.actions(idx);
    let mut out = [0.0; 2];
    for (slot, row) in out.iter_mut().zip(rows) {
        let mut acc = 0.0;
        for (j, p) in &row.successors {
            acc += p * next[*j];
        }
        *slot = row.cost + discount * acc;
    }
    out
}

fn sweep(mdp: &TruncatedMdp, discount: f64, prev: &[f64], q: &mut [[f64; 2]], v: &mut [f64]) {
    let body = |(idx, (qs, vs)): (usize, (&mut [f64; 2], &mut f64))| {
        *qs = lookahead(mdp, idx, discount, prev);
        *vs = qs[0].min(qs[1]);
    };
    if q.len() >= PARALLEL_SWEEP_MIN_STATES {
        q.par_iter_mut()
            .zip(v.par_iter_mut())
            .enumerate()
            .for_each(body);
    } else {
        q.iter_mut().zip(v.iter_mut()).enumerate().for_each(body);
    }
}

/// Relative value iteration from `h_0 = 0`.
pub fn relative_value_iteration(
    d: &ServiceDistribution,
    k: u32,
    cfg: &SolverConfig,
) -> Result<(ValueFunction, Policy)> {
    let mdp = TruncatedMdp::new(d, k)?;
    relative_value_iteration_with(&mdp, cfg, None, None)
}

/// Relative value iteration with an optional starting table and observer.
pub fn relative_value_iteration_with(
    mdp: &TruncatedMdp,
    cfg: &SolverConfig,
    initial: Option<&[f64]>,
    mut observer: Option<&mut dyn IterationObserver>,
) -> Result<(ValueFunction, Policy)> {
    cfg.validate(false)?;
    let grid = mdp.grid();
    let n = grid.len();
    let reference = grid.reference();

    let mut h = match initial {
        Some(h0) if h0.len() == n => {
            let base = h0[reference];
            h0.iter().map(|x| x - base).collect()
        }
        Some(h0) => {
            return Err(Error::InvalidConfig(format!(
                "initial table has {} entries, grid has {n}",
                h0.len()
            )))
        }
        None => vec![0.0; n],
    };
    let mut v = vec![0.0; n];
    let mut q = vec![[0.0; 2]; n];
    let mut span = f64::INFINITY;

    for iteration in 1..=cfg.max_iterations {
        sweep(mdp, 1.0, &h, &mut q, &mut v);

        let (lo, hi) = v
            .iter()
            .zip(&h)
            .map(|(a, b)| a - b)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r), hi.max(r))
            });
        span = hi - lo;

        if let Some(obs) = observer.as_deref_mut() {
            obs.observe(&IterationSnapshot {
                iteration,
                mdp,
                q_values: &q,
                values: &v,
                residual: span,
            });
        }

        let base = v[reference];
        for (hs, vs) in h.iter_mut().zip(&v) {
            *hs = vs - base;
        }

        if span < cfg.tol {
            let value = ValueFunction {
                grid: grid.clone(),
                values: h,
                reference_state: State::empty(1),
                gain: Some(0.5 * (lo + hi)),
                alpha: None,
                iterations: iteration,
                span_residual: span,
            };
            let policy = extract_policy(&value, mdp);
            return Ok((value, policy));
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        residual: span,
    })
}

/// Discounted value iteration from `V_0 = 0`, stopped when the sup-norm
/// change drops below `tol (1 - alpha) / (2 alpha)`.
pub fn discounted_value_iteration(
    d: &ServiceDistribution,
    k: u32,
    cfg: &SolverConfig,
) -> Result<ValueFunction> {
    let mdp = TruncatedMdp::new(d, k)?;
    discounted_value_iteration_with(&mdp, cfg, None)
}

pub fn discounted_value_iteration_with(
    mdp: &TruncatedMdp,
    cfg: &SolverConfig,
    mut observer: Option<&mut dyn IterationObserver>,
) -> Result<ValueFunction> {
    cfg.validate(true)?;
    let alpha = cfg.alpha;
    let threshold = cfg.tol * (1.0 - alpha) / (2.0 * alpha);
    let n = mdp.grid().len();
    let mut prev = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut q = vec![[0.0; 2]; n];
    let mut change = f64::INFINITY;

    for iteration in 1..=cfg.max_iterations {
        sweep(mdp, alpha, &prev, &mut q, &mut v);
        change = v
            .iter()
            .zip(&prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if let Some(obs) = observer.as_deref_mut() {
            obs.observe(&IterationSnapshot {
                iteration,
                mdp,
                q_values: &q,
                values: &v,
                residual: change,
            });
        }
        std::mem::swap(&mut prev, &mut v);
        if change < threshold {
            return Ok(ValueFunction {
                grid: mdp.grid().clone(),
                values: prev,
                reference_state: State::empty(1),
                gain: None,
                alpha: Some(alpha),
                iterations: iteration,
                span_residual: change,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: cfg.max_iterations,
        residual: change,
    })
}

/// Greedy one-step lookahead policy. Exact ties go to the smaller action
/// tag (IDLE < SAMPLE < CONTINUE).
pub fn extract_policy(value: &ValueFunction, mdp: &TruncatedMdp) -> Policy {
    let discount = value.alpha.unwrap_or(1.0);
    let actions = (0..mdp.grid().len())
        .map(|idx| {
            let q = lookahead(mdp, idx, discount, &value.values);
            let rows = mdp.actions(idx);
            if q[1] < q[0] {
                rows[1].action
            } else {
                rows[0].action
            }
        })
        .collect();
    Policy::from_table(mdp.grid().clone(), actions).expect("greedy actions are feasible")
}
