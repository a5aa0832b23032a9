//! Stationary policies on the truncated grid and the structured families:
//! always-preempt and the double-threshold policy.
//!
//! A double-threshold policy `(vth1, vth2)` samples on every empty-server
//! slot, preempts after every slot while the monitor age is at most `vth1`,
//! and afterwards keeps each packet in service until its age reaches `vth2`,
//! at which point it is dropped and replaced by a fresh sample. `vth2 = L`
//! never drops a packet (a packet of age `L - 1` is always delivered).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::mdp::{Action, Grid, State};
use crate::queue_model::ServiceDistribution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DoubleThresholdSpec {
    pub vth1: u32,
    pub vth2: u32,
}

impl DoubleThresholdSpec {
    pub fn new(vth1: u32, vth2: u32, l: usize) -> Result<Self> {
        let spec = Self { vth1, vth2 };
        spec.validate(l)?;
        Ok(spec)
    }

    pub fn validate(&self, l: usize) -> Result<()> {
        if self.vth1 == 0 || self.vth2 == 0 || self.vth2 as usize > l {
            return Err(Error::InvalidThresholds {
                vth1: self.vth1,
                vth2: self.vth2,
                l: l as u32,
            });
        }
        Ok(())
    }

    /// The closed-form rule.
    pub fn action(&self, s: State) -> Action {
        match s.v2 {
            None => Action::Sample,
            Some(_) if s.v1 <= self.vth1 => Action::Sample,
            Some(v2) if v2 < self.vth2 => Action::Continue,
            Some(_) => Action::Sample,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKind {
    Table,
    AlwaysPreempt,
    DoubleThreshold { vth1: u32, vth2: u32 },
}

/// Stationary policy as a table over the grid, in canonical state order.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    grid: Grid,
    actions: Vec<Action>,
    kind: PolicyKind,
}

impl Policy {
    pub fn from_table(grid: Grid, actions: Vec<Action>) -> Result<Self> {
        if actions.len() != grid.len() {
            return Err(Error::InvalidConfig(format!(
                "policy table has {} entries, grid has {}",
                actions.len(),
                grid.len()
            )));
        }
        for (s, a) in grid.states().zip(&actions) {
            if !a.is_feasible(s) {
                return Err(Error::InfeasibleAction {
                    state: s,
                    action: *a,
                });
            }
        }
        Ok(Self {
            grid,
            actions,
            kind: PolicyKind::Table,
        })
    }

    pub fn from_fn(grid: Grid, kind: PolicyKind, rule: impl Fn(State) -> Action) -> Self {
        let actions = grid.states().map(rule).collect();
        Self {
            grid,
            actions,
            kind,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn kind(&self) -> PolicyKind {
        self.kind
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn action_at_index(&self, idx: usize) -> Action {
        self.actions[idx]
    }

    /// Action at `s`; monitor ages beyond the cap use the cap row.
    pub fn action(&self, s: State) -> Option<Action> {
        let clamped = State {
            v1: s.v1.min(self.grid.age_cap()),
            v2: s.v2,
        };
        self.grid.index(clamped).map(|i| self.actions[i])
    }

    pub fn entries(&self) -> impl Iterator<Item = (State, Action)> + '_ {
        self.grid.states().zip(self.actions.iter().copied())
    }

    /// Full state-to-action map in canonical order.
    pub fn table_json(&self) -> Value {
        let mut map = Map::new();
        for (s, a) in self.entries() {
            map.insert(s.to_string(), json!(a));
        }
        Value::Object(map)
    }

    /// Compact form for structured kinds, full table otherwise.
    pub fn to_json(&self) -> Value {
        match self.kind {
            PolicyKind::Table => json!({
                "kind": "table",
                "K": self.grid.age_cap(),
                "L": self.grid.support(),
                "actions": self.table_json(),
            }),
            kind => serde_json::to_value(kind).expect("serializable kind"),
        }
    }

    /// Parses any form produced by [`Policy::to_json`].
    pub fn from_json(value: &Value, grid: &Grid) -> Result<Self> {
        let bad = |m: String| Error::InvalidConfig(format!("policy JSON: {m}"));
        let kind = value
            .get("kind")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing \"kind\"".into()))?;
        if kind != "table" {
            let kind: PolicyKind =
                serde_json::from_value(value.clone()).map_err(|e| bad(e.to_string()))?;
            return match kind {
                PolicyKind::AlwaysPreempt => Ok(always_preempt(grid)),
                PolicyKind::DoubleThreshold { vth1, vth2 } => {
                    double_threshold(DoubleThresholdSpec::new(vth1, vth2, grid.support())?, grid)
                }
                PolicyKind::Table => unreachable!(),
            };
        }
        let table = value
            .get("actions")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("table policy needs an \"actions\" object".into()))?;
        let mut actions = vec![None; grid.len()];
        for (key, a) in table {
            let s: State = key.parse()?;
            let idx = grid.index(s).ok_or(Error::StateOutsideGrid {
                state: s,
                k: grid.age_cap(),
                l: grid.support() as u32,
            })?;
            actions[idx] =
                Some(serde_json::from_value::<Action>(a.clone()).map_err(|e| bad(e.to_string()))?);
        }
        let actions = actions
            .into_iter()
            .enumerate()
            .map(|(i, a)| a.ok_or_else(|| bad(format!("no action for state {}", grid.state(i)))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_table(grid.clone(), actions)
    }
}

/// SAMPLE everywhere.
pub fn always_preempt(grid: &Grid) -> Policy {
    Policy::from_fn(grid.clone(), PolicyKind::AlwaysPreempt, |_| Action::Sample)
}

pub fn double_threshold(spec: DoubleThresholdSpec, grid: &Grid) -> Result<Policy> {
    spec.validate(grid.support())?;
    Ok(Policy::from_fn(
        grid.clone(),
        PolicyKind::DoubleThreshold {
            vth1: spec.vth1,
            vth2: spec.vth2,
        },
        |s| spec.action(s),
    ))
}

/// One point of the threshold search surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfacePoint {
    pub vth1: u32,
    pub vth2: u32,
    pub gain: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchResult {
    pub best: DoubleThresholdSpec,
    pub gain: f64,
    /// Largest `vth1` examined.
    pub vth1_max: u32,
    pub surface: Vec<SurfacePoint>,
}

impl SearchResult {
    pub fn surface_csv(&self) -> String {
        let mut out = String::from("vth1,vth2,gain\n");
        for p in &self.surface {
            out.push_str(&format!("{},{},{:.12}\n", p.vth1, p.vth2, p.gain));
        }
        out
    }
}

/// Two rows whose gains all differ by less than this count as unchanged.
const ROW_STALL_TOL: f64 = 1e-12;

/// Exhaustive search over `vth1 in 1..=Vmax`, `vth2 in 1..=L`.
///
/// `Vmax` is the smallest `v` after which the gains of the row `vth1 = v`
/// (one per `vth2`) stay unchanged for two consecutive increments, capped
/// at `K / 2`. Comparing whole rows matters: rows with small `vth1` all
/// contain the always-preempt gain at `vth2 = 1`, so their minima can tie
/// long before the optimum is reached. Ties go to the lexicographically
/// smallest `(vth1, vth2)`.
pub fn search_double_threshold<E>(
    d: &ServiceDistribution,
    grid: &Grid,
    evaluator: E,
) -> Result<SearchResult>
where
    E: Fn(&Policy) -> Result<f64> + Sync,
{
    let cap = (grid.age_cap() / 2).max(1);
    search_rows(d, grid, 1..=cap, &evaluator)
}

/// The baseline family with `vth1 = 1`: only the drop threshold varies.
pub fn arafa_baseline<E>(d: &ServiceDistribution, grid: &Grid, evaluator: E) -> Result<SearchResult>
where
    E: Fn(&Policy) -> Result<f64> + Sync,
{
    search_rows(d, grid, 1..=1, &evaluator)
}

fn search_rows<E>(
    d: &ServiceDistribution,
    grid: &Grid,
    rows: std::ops::RangeInclusive<u32>,
    evaluator: &E,
) -> Result<SearchResult>
where
    E: Fn(&Policy) -> Result<f64> + Sync,
{
    let l = d.support() as u32;
    let pairs: Vec<DoubleThresholdSpec> = rows
        .clone()
        .flat_map(|vth1| (1..=l).map(move |vth2| DoubleThresholdSpec { vth1, vth2 }))
        .collect();
    let gains = pairs
        .par_iter()
        .map(|spec| evaluator(&double_threshold(*spec, grid)?))
        .collect::<Result<Vec<f64>>>()?;

    let mut surface = Vec::new();
    let mut best: Option<SurfacePoint> = None;
    let mut prev_row: Option<&[f64]> = None;
    let mut stalls = 0;
    let mut vth1_max = *rows.start();
    for (row, chunk) in pairs.chunks(l as usize).zip(gains.chunks(l as usize)) {
        vth1_max = row[0].vth1;
        for (spec, gain) in row.iter().zip(chunk) {
            let point = SurfacePoint {
                vth1: spec.vth1,
                vth2: spec.vth2,
                gain: *gain,
            };
            surface.push(point);
            if best.is_none_or(|b| *gain < b.gain) {
                best = Some(point);
            }
        }
        let unchanged = prev_row.is_some_and(|prev| {
            prev.iter()
                .zip(chunk)
                .all(|(a, b)| (a - b).abs() <= ROW_STALL_TOL)
        });
        stalls = if unchanged { stalls + 1 } else { 0 };
        prev_row = Some(chunk);
        if stalls >= 2 {
            break;
        }
    }
    let best = best.expect("at least one threshold pair");
    Ok(SearchResult {
        best: DoubleThresholdSpec {
            vth1: best.vth1,
            vth2: best.vth2,
        },
        gain: best.gain,
        vth1_max,
        surface,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(k: u32, l: usize) -> Grid {
        Grid::new(k, l).unwrap()
    }

    #[test]
    fn always_preempt_samples_everywhere() {
        let p = always_preempt(&grid(10, 3));
        assert_eq!(p.action(State::busy(3, 1)), Some(Action::Sample));
        assert_eq!(p.action(State::empty(1)), Some(Action::Sample));
        assert!(p.actions().iter().all(|a| *a == Action::Sample));
    }

    #[test]
    fn double_threshold_rule_table() {
        let g = grid(20, 4);
        let p = double_threshold(DoubleThresholdSpec::new(2, 3, 4).unwrap(), &g).unwrap();
        assert_eq!(p.action(State::busy(2, 1)), Some(Action::Sample));
        assert_eq!(p.action(State::busy(5, 3)), Some(Action::Sample));
        assert_eq!(p.action(State::busy(5, 2)), Some(Action::Continue));
        assert_eq!(p.action(State::empty(7)), Some(Action::Sample));

        // vth1 = 1: every reachable busy state has v1 >= 2, so only the drop
        // threshold acts.
        let p = double_threshold(DoubleThresholdSpec::new(1, 3, 4).unwrap(), &g).unwrap();
        for v1 in 2..=20 {
            assert_eq!(p.action(State::busy(v1, 1)), Some(Action::Continue));
            assert_eq!(p.action(State::busy(v1, 2)), Some(Action::Continue));
            if v1 >= 3 {
                assert_eq!(p.action(State::busy(v1, 3)), Some(Action::Sample));
            }
        }
    }

    #[test]
    fn degenerate_thresholds_equal_always_preempt() {
        let g = grid(30, 2);
        let p = double_threshold(DoubleThresholdSpec::new(1, 1, 2).unwrap(), &g).unwrap();
        assert_eq!(p.actions(), always_preempt(&g).actions());

        let g = grid(30, 4);
        for vth2 in 1..=4 {
            let p = double_threshold(DoubleThresholdSpec::new(30, vth2, 4).unwrap(), &g).unwrap();
            assert_eq!(p.actions(), always_preempt(&g).actions());
        }
    }

    #[test]
    fn tables_are_feasible_and_never_idle() {
        let g = grid(25, 5);
        for vth1 in 1..8 {
            for vth2 in 1..=5 {
                let p =
                    double_threshold(DoubleThresholdSpec::new(vth1, vth2, 5).unwrap(), &g).unwrap();
                for (s, a) in p.entries() {
                    assert!(a.is_feasible(s));
                    assert_ne!(a, Action::Idle);
                }
            }
        }
    }

    #[test]
    fn rejects_bad_thresholds() {
        assert!(matches!(
            DoubleThresholdSpec::new(0, 1, 3),
            Err(Error::InvalidThresholds { .. })
        ));
        assert!(DoubleThresholdSpec::new(1, 0, 3).is_err());
        assert!(DoubleThresholdSpec::new(1, 4, 3).is_err());
        assert!(DoubleThresholdSpec::new(1, 3, 3).is_ok());
    }

    #[test]
    fn table_rejects_infeasible_actions() {
        let g = grid(3, 2);
        let mut actions = always_preempt(&g).actions().to_vec();
        actions[0] = Action::Idle; // (1, 1) is busy
        assert!(matches!(
            Policy::from_table(g, actions),
            Err(Error::InfeasibleAction { .. })
        ));
    }

    #[test]
    fn json_forms_round_trip() {
        let g = grid(12, 3);
        let dt = double_threshold(DoubleThresholdSpec::new(2, 2, 3).unwrap(), &g).unwrap();
        let v = dt.to_json();
        assert_eq!(v, json!({"kind": "double_threshold", "vth1": 2, "vth2": 2}));
        assert_eq!(Policy::from_json(&v, &g).unwrap(), dt);

        let table = Policy::from_table(g.clone(), dt.actions().to_vec()).unwrap();
        let v = table.to_json();
        let keys: Vec<&String> = v["actions"].as_object().unwrap().keys().collect();
        assert_eq!(keys[0], "1:1");
        assert_eq!(keys[1], "1:E");
        assert_eq!(keys[2], "2:1");
        let back = Policy::from_json(&v, &g).unwrap();
        assert_eq!(back.actions(), dt.actions());

        let ap = Policy::from_json(&json!({"kind": "always_preempt"}), &g).unwrap();
        assert_eq!(ap, always_preempt(&g));
        assert!(Policy::from_json(&json!({"kind": "table", "actions": {}}), &g).is_err());
    }

    #[test]
    fn search_breaks_ties_lexicographically() {
        let d = ServiceDistribution::new(&[0.5, 0.5]).unwrap();
        let g = grid(20, 2);
        let flat = search_double_threshold(&d, &g, |_| Ok(3.0)).unwrap();
        assert_eq!(flat.best, DoubleThresholdSpec { vth1: 1, vth2: 1 });
        // Rows 1, 2, 3 all have the same minimum: stop after two stalls.
        assert_eq!(flat.vth1_max, 3);
        assert_eq!(flat.surface.len(), 6);
    }
}
