//! The age-capped MDP: states `(v1, v2)`, actions, costs and kernels.
//!
//! `v1` is the monitor age, `v2` the age of the packet in service or
//! `EMPTY`. Packets in service never reach age `L` (they are delivered with
//! certainty at the end of age `L - 1`), so `v2 <= L - 1` on the grid.

use std::fmt;
use std::str::FromStr;

use arrayvec::ArrayVec;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::queue_model::ServiceDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct State {
    pub v1: u32,
    /// Age of the in-service packet; `None` is the empty server.
    pub v2: Option<u32>,
}

impl State {
    pub const fn empty(v1: u32) -> Self {
        Self { v1, v2: None }
    }

    pub const fn busy(v1: u32, v2: u32) -> Self {
        Self { v1, v2: Some(v2) }
    }

    pub fn is_empty(&self) -> bool {
        self.v2.is_none()
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.v2 {
            Some(v2) => write!(f, "{}:{}", self.v1, v2),
            None => write!(f, "{}:E", self.v1),
        }
    }
}

impl FromStr for State {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("bad state '{s}', expected v1:v2 or v1:E"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let v1 = a.trim().parse().map_err(|_| bad())?;
        let v2 = match b.trim() {
            "E" => None,
            other => Some(other.parse().map_err(|_| bad())?),
        };
        Ok(Self { v1, v2 })
    }
}

impl Serialize for State {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for State {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sampler-scheduler action. The tag order is the tie-breaking order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    /// Empty server, do not sample.
    Idle = 0,
    /// Sample a fresh packet and put it in service, preempting any packet
    /// already there.
    Sample = 1,
    /// Keep serving the current packet.
    Continue = 2,
}

impl Action {
    pub const ALL: [Action; 3] = [Action::Idle, Action::Sample, Action::Continue];

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn is_feasible(self, s: State) -> bool {
        match self {
            Action::Idle => s.is_empty(),
            Action::Sample => true,
            Action::Continue => !s.is_empty(),
        }
    }
}

/// Feasible actions of `s`, in tag order.
pub fn feasible_actions(s: State) -> [Action; 2] {
    if s.is_empty() {
        [Action::Idle, Action::Sample]
    } else {
        [Action::Sample, Action::Continue]
    }
}

/// One-step cost `C(s, a) = v1`.
pub fn cost(s: State, a: Action) -> Result<f64> {
    if !a.is_feasible(s) {
        return Err(Error::InfeasibleAction {
            state: s,
            action: a,
        });
    }
    Ok(f64::from(s.v1))
}

/// Successor list of one `(state, action)` pair; at most two entries, all
/// with positive probability.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransitionList {
    entries: ArrayVec<(State, f64), 2>,
}

impl TransitionList {
    fn push(&mut self, s: State, prob: f64) {
        if prob > 0.0 {
            self.entries.push((s, prob));
        }
    }

    pub fn entries(&self) -> &[(State, f64)] {
        &self.entries
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|(_, p)| p).sum()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn check_packet_age(s: State, d: &ServiceDistribution) -> Result<()> {
    match s.v2 {
        Some(v2) if v2 == 0 || v2 as usize >= d.support() || v2 > s.v1 => {
            Err(Error::InvalidGrid(format!(
                "state {s} violates 1 <= v2 <= min(v1, L - 1) with L = {}",
                d.support()
            )))
        }
        _ if s.v1 == 0 => Err(Error::InvalidGrid(format!("state {s} has v1 = 0"))),
        _ => Ok(()),
    }
}

/// Untruncated kernel: `v1 + 1` may exceed any cap.
pub fn transitions(s: State, a: Action, d: &ServiceDistribution) -> Result<TransitionList> {
    transitions_capped(s, a, d, u32::MAX)
}

fn transitions_capped(
    s: State,
    a: Action,
    d: &ServiceDistribution,
    cap: u32,
) -> Result<TransitionList> {
    if !a.is_feasible(s) {
        return Err(Error::InfeasibleAction {
            state: s,
            action: a,
        });
    }
    check_packet_age(s, d)?;
    let next_age = s.v1.saturating_add(1).min(cap);
    let l = d.support();
    let mut out = TransitionList::default();
    match a {
        Action::Idle => out.push(State::empty(next_age), 1.0),
        Action::Sample => {
            let q1 = d.q_at(1);
            out.push(State::empty(1), q1);
            if l > 1 {
                out.push(State::busy(next_age, 1), 1.0 - q1);
            }
        }
        Action::Continue => {
            let age = s.v2.expect("feasible CONTINUE has a packet") + 1;
            let q = d.q_at(age as usize);
            out.push(State::empty(age), q);
            if (age as usize) < l {
                out.push(State::busy(next_age, age), 1.0 - q);
            }
        }
    }
    Ok(out)
}

/// Kernel of the age-capped MDP: successors with `v1 > K` are folded into
/// the saturated state `(K, v2')`.
pub fn transitions_truncated(
    s: State,
    a: Action,
    d: &ServiceDistribution,
    k: u32,
) -> Result<TransitionList> {
    let grid = Grid::new(k, d.support())?;
    if grid.index(s).is_none() {
        return Err(Error::StateOutsideGrid {
            state: s,
            k,
            l: d.support() as u32,
        });
    }
    transitions_capped(s, a, d, k)
}

/// Canonical enumeration of the truncated state space.
///
/// Order: `v1` ascending; within a `v1` block the busy states by `v2`
/// ascending, then the empty state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    k: u32,
    l: usize,
    offsets: Vec<usize>,
}

impl Grid {
    pub fn new(k: u32, l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::InvalidGrid("support bound L must be >= 1".into()));
        }
        if (k as usize) < l {
            return Err(Error::RejectsKSmallerThanL { k, l: l as u32 });
        }
        let mut offsets = Vec::with_capacity(k as usize + 2);
        offsets.push(0);
        offsets.push(0);
        for v1 in 1..=k as usize {
            let prev = offsets[v1];
            offsets.push(prev + v1.min(l - 1) + 1);
        }
        Ok(Self { k, l, offsets })
    }

    pub fn for_distribution(k: u32, d: &ServiceDistribution) -> Result<Self> {
        Self::new(k, d.support())
    }

    pub fn age_cap(&self) -> u32 {
        self.k
    }

    pub fn support(&self) -> usize {
        self.l
    }

    pub fn len(&self) -> usize {
        self.offsets[self.k as usize + 1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest packet age on row `v1`.
    pub fn max_packet_age(&self, v1: u32) -> u32 {
        v1.min(self.l as u32 - 1)
    }

    pub fn index(&self, s: State) -> Option<usize> {
        if s.v1 == 0 || s.v1 > self.k {
            return None;
        }
        let base = self.offsets[s.v1 as usize];
        let width = self.max_packet_age(s.v1);
        match s.v2 {
            None => Some(base + width as usize),
            Some(v2) if v2 >= 1 && v2 <= width => Some(base + v2 as usize - 1),
            Some(_) => None,
        }
    }

    pub fn state(&self, idx: usize) -> State {
        let v1 = self.offsets.partition_point(|&o| o <= idx) - 1;
        let pos = idx - self.offsets[v1];
        let width = self.max_packet_age(v1 as u32) as usize;
        if pos == width {
            State::empty(v1 as u32)
        } else {
            State::busy(v1 as u32, pos as u32 + 1)
        }
    }

    pub fn states(&self) -> impl Iterator<Item = State> + '_ {
        (1..=self.k).flat_map(move |v1| {
            (1..=self.max_packet_age(v1))
                .map(move |v2| State::busy(v1, v2))
                .chain(std::iter::once(State::empty(v1)))
        })
    }

    /// The reference state `(1, E)`.
    pub fn reference(&self) -> usize {
        self.index(State::empty(1))
            .expect("(1, E) is always on the grid")
    }

    /// True for rows distorted by the age cap: `v1 >= K - L`.
    pub fn is_cap_row(&self, v1: u32) -> bool {
        i64::from(v1) >= i64::from(self.k) - self.l as i64
    }
}

/// `enumerate_states(K, L)` in canonical order.
pub fn enumerate_states(k: u32, l: usize) -> Result<Vec<State>> {
    Ok(Grid::new(k, l)?.states().collect())
}

/// One feasible action of a grid state with its cost and indexed successors.
#[derive(Debug, Clone)]
pub struct ActionRow {
    pub action: Action,
    pub cost: f64,
    pub successors: ArrayVec<(usize, f64), 2>,
}

/// The truncated MDP with all kernels precomputed against grid indices.
#[derive(Debug, Clone)]
pub struct TruncatedMdp {
    grid: Grid,
    dist: ServiceDistribution,
    rows: Vec<[ActionRow; 2]>,
}

impl TruncatedMdp {
    pub fn new(d: &ServiceDistribution, k: u32) -> Result<Self> {
        let grid = Grid::for_distribution(k, d)?;
        let mut rows = Vec::with_capacity(grid.len());
        for s in grid.states() {
            let [a0, a1] = feasible_actions(s);
            rows.push([Self::row(&grid, d, s, a0)?, Self::row(&grid, d, s, a1)?]);
        }
        Ok(Self {
            grid,
            dist: d.clone(),
            rows,
        })
    }

    fn row(grid: &Grid, d: &ServiceDistribution, s: State, a: Action) -> Result<ActionRow> {
        let list = transitions_capped(s, a, d, grid.age_cap())?;
        let successors = list
            .entries()
            .iter()
            .map(|(t, p)| {
                let idx = grid.index(*t).ok_or(Error::StateOutsideGrid {
                    state: *t,
                    k: grid.age_cap(),
                    l: grid.support() as u32,
                })?;
                Ok((idx, *p))
            })
            .collect::<Result<_>>()?;
        Ok(ActionRow {
            action: a,
            cost: f64::from(s.v1),
            successors,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn distribution(&self) -> &ServiceDistribution {
        &self.dist
    }

    /// The two feasible actions of state `idx`, in tag order.
    pub fn actions(&self, idx: usize) -> &[ActionRow; 2] {
        &self.rows[idx]
    }

    pub fn action_row(&self, idx: usize, a: Action) -> Option<&ActionRow> {
        self.rows[idx].iter().find(|r| r.action == a)
    }

    /// Sparse `(row, col, prob)` CSV of the chain induced by `choose`.
    pub fn kernel_csv(&self, mut choose: impl FnMut(usize) -> Action) -> String {
        let mut out = String::from("row,col,prob\n");
        for idx in 0..self.grid.len() {
            if let Some(r) = self.action_row(idx, choose(idx)) {
                for (col, p) in &r.successors {
                    out.push_str(&format!("{},{},{:e}\n", idx, col, p));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dist(p: &[f64]) -> ServiceDistribution {
        ServiceDistribution::new(p).unwrap()
    }

    fn entries(list: &TransitionList) -> Vec<(String, f64)> {
        list.entries()
            .iter()
            .map(|(s, p)| (s.to_string(), *p))
            .collect()
    }

    fn assert_entries(list: &TransitionList, expected: &[(&str, f64)]) {
        let got = entries(list);
        assert_eq!(got.len(), expected.len(), "{got:?}");
        for ((s, p), (es, ep)) in got.iter().zip(expected) {
            assert_eq!(s, es);
            assert_abs_diff_eq!(*p, *ep, epsilon = 1e-12);
        }
    }

    #[test]
    fn enumerates_small_grids() {
        let names: Vec<String> = enumerate_states(3, 2)
            .unwrap()
            .iter()
            .map(State::to_string)
            .collect();
        assert_eq!(names, ["1:1", "1:E", "2:1", "2:E", "3:1", "3:E"]);
        assert_eq!(enumerate_states(1, 1).unwrap(), vec![State::empty(1)]);
        assert_eq!(enumerate_states(5, 3).unwrap().len(), 14);
        assert!(matches!(
            enumerate_states(2, 3),
            Err(Error::RejectsKSmallerThanL { k: 2, l: 3 })
        ));
    }

    #[test]
    fn grid_index_round_trips() {
        let grid = Grid::new(40, 5).unwrap();
        for (i, s) in grid.states().enumerate() {
            assert_eq!(grid.index(s), Some(i));
            assert_eq!(grid.state(i), s);
        }
        assert_eq!(grid.index(State::busy(3, 4)), None);
        assert_eq!(grid.index(State::busy(10, 5)), None);
        assert_eq!(grid.index(State::empty(41)), None);
    }

    #[test]
    fn feasible_action_sets() {
        assert_eq!(
            feasible_actions(State::empty(5)),
            [Action::Idle, Action::Sample]
        );
        assert_eq!(
            feasible_actions(State::busy(5, 2)),
            [Action::Sample, Action::Continue]
        );
        assert_eq!(
            feasible_actions(State::busy(1, 1)),
            [Action::Sample, Action::Continue]
        );
    }

    #[test]
    fn cost_is_monitor_age() {
        assert_eq!(cost(State::busy(7, 2), Action::Continue).unwrap(), 7.0);
        assert_eq!(cost(State::empty(1), Action::Sample).unwrap(), 1.0);
        assert_eq!(cost(State::busy(100, 1), Action::Sample).unwrap(), 100.0);
        assert!(matches!(
            cost(State::empty(3), Action::Continue),
            Err(Error::InfeasibleAction { .. })
        ));
        assert!(cost(State::busy(3, 1), Action::Idle).is_err());
    }

    #[test]
    fn untruncated_kernels() {
        let d = dist(&[0.4, 0.3, 0.3]);
        assert_entries(
            &transitions(State::empty(5), Action::Sample, &d).unwrap(),
            &[("1:E", 0.4), ("6:1", 0.6)],
        );
        assert_entries(
            &transitions(State::empty(5), Action::Idle, &d).unwrap(),
            &[("6:E", 1.0)],
        );
        // q3 = 1 for L = 3: a packet of age 2 is delivered with certainty.
        assert_entries(
            &transitions(State::busy(4, 2), Action::Continue, &d).unwrap(),
            &[("3:E", 1.0)],
        );

        // q3 = 0.5.
        let d = dist(&[0.25, 0.25, 0.25, 0.25]);
        assert_abs_diff_eq!(d.hazard(3).unwrap(), 1.0 / 2.0, epsilon = 1e-12);
        assert_entries(
            &transitions(State::busy(5, 2), Action::Continue, &d).unwrap(),
            &[("3:E", 0.5), ("6:3", 0.5)],
        );

        let one = dist(&[1.0]);
        assert_entries(
            &transitions(State::empty(4), Action::Sample, &one).unwrap(),
            &[("1:E", 1.0)],
        );
        assert!(transitions(State::empty(4), Action::Continue, &one).is_err());
    }

    #[test]
    fn truncated_kernels_saturate_at_cap() {
        let k = 10;
        let d = dist(&[0.4, 0.3, 0.3]);
        assert_entries(
            &transitions_truncated(State::empty(k), Action::Sample, &d, k).unwrap(),
            &[("1:E", 0.4), ("10:1", 0.6)],
        );
        assert_entries(
            &transitions_truncated(State::empty(k), Action::Idle, &d, k).unwrap(),
            &[("10:E", 1.0)],
        );
        let d = dist(&[0.25, 0.25, 0.25, 0.25]);
        assert_entries(
            &transitions_truncated(State::busy(k, 2), Action::Continue, &d, k).unwrap(),
            &[("3:E", 0.5), ("10:3", 0.5)],
        );
        assert!(matches!(
            transitions_truncated(State::empty(k + 1), Action::Sample, &d, k),
            Err(Error::StateOutsideGrid { .. })
        ));
    }

    #[test]
    fn interior_zero_hazard_drops_zero_mass_entry() {
        let d = dist(&[0.5, 0.0, 0.5]);
        let list = transitions(State::busy(3, 1), Action::Continue, &d).unwrap();
        assert_entries(&list, &[("4:2", 1.0)]);
    }

    #[test]
    fn kernel_csv_lists_induced_chain() {
        let d = dist(&[0.5, 0.5]);
        let mdp = TruncatedMdp::new(&d, 2).unwrap();
        let csv = mdp.kernel_csv(|_| Action::Sample);
        assert!(csv.starts_with("row,col,prob\n"));
        assert_eq!(csv.lines().count(), 1 + 2 * mdp.grid().len());
    }

    fn pmf_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 1..6).prop_map(|mut w| {
            w[0] += 0.05;
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn kernel_invariants_on_grid(p in pmf_strategy(), extra in 0u32..12) {
            let d = dist(&p);
            let k = d.support() as u32 + extra;
            let grid = Grid::for_distribution(k, &d).unwrap();
            for s in grid.states() {
                for a in feasible_actions(s) {
                    let t = transitions_truncated(s, a, &d, k).unwrap();
                    prop_assert!(t.len() <= 2);
                    prop_assert!((t.total() - 1.0).abs() < 1e-12);
                    for (next, prob) in t.entries() {
                        prop_assert!(*prob > 0.0);
                        prop_assert!(grid.index(*next).is_some(), "{} -> {}", s, next);
                        if let Some(v2) = next.v2 {
                            prop_assert!(next.v1 >= v2);
                        }
                    }
                    if s.v1 < k {
                        let plain = transitions(s, a, &d).unwrap();
                        prop_assert_eq!(plain, t);
                    }
                }
            }
        }
    }
}
