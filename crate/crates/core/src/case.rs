//! Static problem data: generating units, demand, and the optional DC network.
//!
//! Cases are read from UTF-8 JSON documents. Every document is fully
//! validated on load, so the rest of the crate can rely on the invariants
//! documented on each type.

use std::collections::{HashSet, VecDeque};
use std::fmt;
use std::sync::{Arc, OnceLock};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::Topology;

/// Which balance constraints are relaxed: one system-wide balance per hour,
/// or one nodal balance per bus and hour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    System,
    Nodal,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::System => f.write_str("system"),
            Mode::Nodal => f.write_str("nodal"),
        }
    }
}

/// Static data of one generating unit.
///
/// Powers are in MW, ramps in MW/h, times in hours and costs in $
/// (`energy_cost` in $/MWh, `noload_cost` in $/h).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitParams {
    pub id: String,
    /// Bus the unit is connected to (1-based). Only used in nodal mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bus: Option<usize>,
    pub p_min: f64,
    pub p_max: f64,
    /// Ramp limit between two consecutive online hours.
    pub ramp: f64,
    /// Cap on output in the first hour after a start-up and the last hour
    /// before a shut-down.
    pub startup_ramp: f64,
    /// Ramp limit from `init_power` into hour 1 when the unit stays online.
    pub initial_ramp: f64,
    pub min_up: u32,
    pub min_down: u32,
    pub energy_cost: f64,
    pub startup_cost: f64,
    pub noload_cost: f64,
    pub init_on: bool,
    /// Hours the unit has been in its initial state before hour 1.
    pub init_dwell: u32,
    pub init_power: f64,
}

impl UnitParams {
    /// Upper output limit in an hour that directly follows a start-up or
    /// precedes a shut-down.
    pub fn transition_cap(&self) -> f64 {
        self.p_max.min(self.startup_ramp)
    }

    /// Number of leading hours the initial condition forces online.
    pub fn forced_on_hours(&self) -> usize {
        if self.init_on {
            self.min_up.saturating_sub(self.init_dwell) as usize
        } else {
            0
        }
    }

    /// Number of leading hours the initial condition forces offline.
    pub fn forced_off_hours(&self) -> usize {
        if self.init_on {
            0
        } else {
            self.min_down.saturating_sub(self.init_dwell) as usize
        }
    }

    /// Whether an initially online unit may already be offline in hour 1.
    pub fn can_shut_down_at_start(&self) -> bool {
        self.init_on && self.forced_on_hours() == 0 && self.init_power <= self.startup_ramp
    }
}

/// A transmission line of the DC network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    /// Sending bus (1-based).
    pub from: usize,
    /// Receiving bus (1-based).
    pub to: usize,
    /// Reactance, expressed so that flow in MW equals the angle difference
    /// in radians divided by the reactance.
    pub reactance: f64,
    pub f_min: f64,
    pub f_max: f64,
}

/// DC network with nodal demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    pub bus_count: usize,
    /// Bus whose angle is fixed at zero (1-based).
    pub reference_bus: usize,
    pub lines: Vec<Line>,
    /// Demand in MW, one row per bus, one column per hour.
    pub nodal_demand: Vec<Vec<f64>>,
    #[serde(skip)]
    topology: TopologyCache,
}

impl NetworkModel {
    pub fn new(
        bus_count: usize,
        reference_bus: usize,
        lines: Vec<Line>,
        nodal_demand: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            bus_count,
            reference_bus,
            lines,
            nodal_demand,
            topology: TopologyCache::default(),
        }
    }

    /// Derived network structures (spanning tree, cycle basis, sensitivity
    /// factors), built on first use. Requires a validated, connected network.
    pub fn topology(&self) -> &Topology {
        self.topology
            .0
            .get_or_init(|| Arc::new(Topology::build(self)))
    }

    pub fn reference_index(&self) -> usize {
        self.reference_bus - 1
    }
}

#[derive(Clone, Default)]
struct TopologyCache(OnceLock<Arc<Topology>>);

impl PartialEq for TopologyCache {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl fmt::Debug for TopologyCache {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("TopologyCache")
    }
}

/// A complete unit commitment instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseData {
    pub horizon: usize,
    pub mode: Mode,
    pub units: Vec<UnitParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_demand: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkModel>,
}

impl CaseData {
    /// Total demand of hour `t` (0-based), summed over buses in nodal mode.
    pub fn total_demand(&self, t: usize) -> f64 {
        match self.mode {
            Mode::System => self.system_demand.as_ref().map_or(0.0, |d| d[t]),
            Mode::Nodal => self
                .network
                .as_ref()
                .map_or(0.0, |n| n.nodal_demand.iter().map(|row| row[t]).sum()),
        }
    }

    pub fn network(&self) -> Option<&NetworkModel> {
        match self.mode {
            Mode::Nodal => self.network.as_ref(),
            Mode::System => None,
        }
    }

    /// Number of relaxed balance constraints per hour.
    pub fn balance_rows(&self) -> usize {
        self.network().map_or(1, |n| n.bus_count)
    }

    /// 0-based bus index of unit `i` in nodal mode, 0 in system mode.
    pub fn unit_row(&self, i: usize) -> usize {
        match self.mode {
            Mode::System => 0,
            Mode::Nodal => self.units[i].bus.map_or(0, |b| b - 1),
        }
    }

    /// Collapse a nodal case onto a single system-wide balance per hour.
    pub fn to_system_mode(&self) -> CaseData {
        let demand = (0..self.horizon).map(|t| self.total_demand(t)).collect();
        CaseData {
            horizon: self.horizon,
            mode: Mode::System,
            units: self.units.clone(),
            system_demand: Some(demand),
            network: None,
        }
    }

    /// Serialize back into the case document format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("case data is always serializable")
    }
}

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("case parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid case: {0}")]
    Invalid(Violation),
}

/// One violated case invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// What the invariant is about, e.g. `unit 2`, `line 7`, `network`.
    pub subject: String,
    pub invariant: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.invariant)
    }
}

/// Parse and validate a case document.
pub fn load_case(source: &str) -> Result<CaseData, CaseError> {
    let case: CaseData = serde_json::from_str(source).map_err(|e| CaseError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    if let Some(first) = violations(&case).into_iter().next() {
        return Err(CaseError::Invalid(first));
    }
    for t in 0..case.horizon {
        let capacity: f64 = case.units.iter().map(|u| u.p_max).sum();
        if capacity < case.total_demand(t) {
            warn!(
                "hour {}: demand {:.3} MW exceeds installed capacity {:.3} MW",
                t + 1,
                case.total_demand(t),
                capacity
            );
        }
    }
    Ok(case)
}

/// Every invariant the case violates, in document order.
pub fn violations(case: &CaseData) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |subject: String, invariant: String| out.push(Violation { subject, invariant });

    if case.horizon == 0 {
        push("case".into(), "horizon must be at least 1 hour".into());
    }
    if case.units.is_empty() {
        push("case".into(), "at least one unit is required".into());
    }

    let mut ids = HashSet::new();
    for u in &case.units {
        let subject = format!("unit {}", u.id);
        if !ids.insert(u.id.as_str()) {
            push(subject.clone(), "duplicate unit id".into());
        }
        let numbers = [
            u.p_min,
            u.p_max,
            u.ramp,
            u.startup_ramp,
            u.initial_ramp,
            u.energy_cost,
            u.startup_cost,
            u.noload_cost,
            u.init_power,
        ];
        if numbers.iter().any(|v| !v.is_finite()) {
            push(subject.clone(), "all numeric fields must be finite".into());
            continue;
        }
        if u.p_min < 0.0 || u.p_min > u.p_max {
            push(
                subject.clone(),
                format!("requires 0 <= p_min <= p_max (got {} and {})", u.p_min, u.p_max),
            );
        }
        if u.ramp <= 0.0 {
            push(subject.clone(), "ramp must be positive".into());
        }
        if u.initial_ramp <= 0.0 {
            push(subject.clone(), "initial_ramp must be positive".into());
        }
        if u.startup_ramp < u.p_min {
            push(
                subject.clone(),
                format!(
                    "unit can never start: startup_ramp {} < p_min {}",
                    u.startup_ramp, u.p_min
                ),
            );
        }
        if u.min_up < 1 || u.min_down < 1 {
            push(subject.clone(), "min_up and min_down must be at least 1".into());
        }
        if u.energy_cost < 0.0 || u.startup_cost < 0.0 || u.noload_cost < 0.0 {
            push(subject.clone(), "costs must be non-negative".into());
        }
        if u.init_on {
            if u.init_power < u.p_min || u.init_power > u.p_max {
                push(
                    subject.clone(),
                    format!(
                        "initially online unit needs p_min <= init_power <= p_max (got {})",
                        u.init_power
                    ),
                );
            }
        } else if u.init_power != 0.0 {
            push(subject.clone(), "initially offline unit must have init_power = 0".into());
        }
    }

    match case.mode {
        Mode::System => match &case.system_demand {
            None => push("case".into(), "system mode requires system_demand".into()),
            Some(d) => {
                if d.len() != case.horizon {
                    push(
                        "system_demand".into(),
                        format!("expected {} hourly values, got {}", case.horizon, d.len()),
                    );
                }
                if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    push("system_demand".into(), "demand must be finite and >= 0".into());
                }
            }
        },
        Mode::Nodal => match &case.network {
            None => push("case".into(), "nodal mode requires a network".into()),
            Some(net) => {
                for v in network_violations(net, case.horizon) {
                    push(v.subject, v.invariant);
                }
                for u in &case.units {
                    match u.bus {
                        Some(b) if b >= 1 && b <= net.bus_count => {}
                        Some(b) => push(
                            format!("unit {}", u.id),
                            format!("bus {b} does not exist in the network"),
                        ),
                        None => push(
                            format!("unit {}", u.id),
                            "nodal mode requires a bus for every unit".into(),
                        ),
                    }
                }
            }
        },
    }
    out
}

fn network_violations(net: &NetworkModel, horizon: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |subject: String, invariant: String| out.push(Violation { subject, invariant });
    let n = net.bus_count;
    if n == 0 {
        push("network".into(), "bus_count must be at least 1".into());
        return out;
    }
    if net.reference_bus < 1 || net.reference_bus > n {
        push(
            "network".into(),
            format!("reference_bus {} is not a bus", net.reference_bus),
        );
    }
    let mut endpoints_ok = true;
    for (idx, l) in net.lines.iter().enumerate() {
        let subject = format!("line {}", idx + 1);
        if l.from < 1 || l.from > n || l.to < 1 || l.to > n || l.from == l.to {
            push(subject.clone(), "endpoints must be two distinct existing buses".into());
            endpoints_ok = false;
        }
        if !l.reactance.is_finite() || l.reactance <= 0.0 {
            push(subject.clone(), "reactance must be positive".into());
        }
        if !l.f_min.is_finite() || !l.f_max.is_finite() || l.f_min > l.f_max {
            push(subject.clone(), "requires finite f_min <= f_max".into());
        }
    }
    if endpoints_ok && !is_connected(n, &net.lines) {
        push("network".into(), "network graph is not connected".into());
    }
    if net.nodal_demand.len() != n || net.nodal_demand.iter().any(|r| r.len() != horizon) {
        push(
            "nodal_demand".into(),
            format!("expected a {n} x {horizon} matrix"),
        );
    } else if net
        .nodal_demand
        .iter()
        .flatten()
        .any(|v| !v.is_finite() || *v < 0.0)
    {
        push("nodal_demand".into(), "demand must be finite and >= 0".into());
    }
    out
}

fn is_connected(n: usize, lines: &[Line]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for l in lines {
        adj[l.from - 1].push(l.to - 1);
        adj[l.to - 1].push(l.from - 1);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(b) = queue.pop_front() {
        for &c in &adj[b] {
            if !seen[c] {
                seen[c] = true;
                queue.push_back(c);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Unit indices sorted by energy cost, ties broken by id.
pub fn merit_order(case: &CaseData) -> Vec<usize> {
    let mut order: Vec<usize> = (0..case.units.len()).collect();
    order.sort_by(|&a, &b| {
        let (ua, ub) = (&case.units[a], &case.units[b]);
        ua.energy_cost
            .total_cmp(&ub.energy_cost)
            .then_with(|| ua.id.cmp(&ub.id))
    });
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn unit(id: &str) -> UnitParams {
        UnitParams {
            id: id.into(),
            bus: None,
            p_min: 50.0,
            p_max: 200.0,
            ramp: 100.0,
            startup_ramp: 100.0,
            initial_ramp: 100.0,
            min_up: 1,
            min_down: 1,
            energy_cost: 40.0,
            startup_cost: 0.0,
            noload_cost: 0.0,
            init_on: false,
            init_dwell: 1,
            init_power: 0.0,
        }
    }

    fn system_case(units: Vec<UnitParams>, demand: Vec<f64>) -> CaseData {
        CaseData {
            horizon: demand.len(),
            mode: Mode::System,
            units,
            system_demand: Some(demand),
            network: None,
        }
    }

    #[test]
    fn example1_loads() {
        let case = load_case(crate::cases::EXAMPLE1).unwrap();
        assert_eq!(case.units.len(), 2);
        assert_eq!(case.horizon, 24);
        assert_eq!(case.mode, Mode::System);
        let u1 = &case.units[0];
        assert_eq!((u1.p_min, u1.p_max), (50.0, 200.0));
        assert_eq!((u1.initial_ramp, u1.ramp, u1.energy_cost), (150.3, 200.6, 65.0));
        let u2 = &case.units[1];
        assert_eq!((u2.initial_ramp, u2.ramp), (70.35, 40.7));
        assert_eq!((u2.energy_cost, u2.startup_cost), (40.0, 6000.0));
    }

    #[test]
    fn ieee118_loads_in_nodal_mode() {
        let case = load_case(crate::cases::IEEE118_TX).unwrap();
        assert_eq!(case.units.len(), 54);
        assert_eq!(case.horizon, 24);
        assert_eq!(case.mode, Mode::Nodal);
        assert_eq!(case.network.as_ref().unwrap().bus_count, 118);
        let plain = load_case(crate::cases::IEEE118).unwrap();
        assert_eq!(plain.units.len(), 54);
        assert_eq!(plain.mode, Mode::System);
    }

    #[test]
    fn rejects_unstartable_unit() {
        let mut u = unit("1");
        u.startup_ramp = 40.0;
        let doc = system_case(vec![u], vec![100.0]).to_json();
        let err = load_case(&doc).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unit can never start"), "{msg}");
        assert!(msg.contains("unit 1"), "{msg}");
    }

    #[test]
    fn parse_error_reports_location() {
        let err = load_case("{\n  \"horizon\": 2,\n  \"mode\": \"system\",\n  \"units\": [ {\"id\": \"a\"} ]\n}")
            .unwrap_err();
        match err {
            CaseError::Parse { line, message, .. } => {
                assert_eq!(line, 4);
                assert!(message.contains("p_min"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_initial_power_and_costs() {
        let mut u = unit("x");
        u.init_power = 10.0;
        u.energy_cost = -1.0;
        let case = system_case(vec![u], vec![10.0]);
        let v = violations(&case);
        assert!(v.iter().any(|v| v.invariant.contains("init_power = 0")));
        assert!(v.iter().any(|v| v.invariant.contains("non-negative")));
    }

    #[test]
    fn rejects_disconnected_network() {
        let mut u = unit("g");
        u.bus = Some(1);
        let net = NetworkModel::new(
            3,
            1,
            vec![Line { from: 1, to: 2, reactance: 0.1, f_min: -10.0, f_max: 10.0 }],
            vec![vec![0.0]; 3],
        );
        let case = CaseData {
            horizon: 1,
            mode: Mode::Nodal,
            units: vec![u],
            system_demand: None,
            network: Some(net),
        };
        let v = violations(&case);
        assert!(v.iter().any(|v| v.invariant.contains("not connected")), "{v:?}");
    }

    #[test]
    fn merit_order_examples() {
        let case = load_case(crate::cases::EXAMPLE1).unwrap();
        let order: Vec<&str> = merit_order(&case)
            .into_iter()
            .map(|i| case.units[i].id.as_str())
            .collect();
        assert_eq!(order, ["2", "1"]);

        let single = system_case(vec![unit("only")], vec![1.0]);
        assert_eq!(merit_order(&single), vec![0]);

        let tied = system_case(vec![unit("b"), unit("a")], vec![1.0]);
        assert_eq!(merit_order(&tied), vec![1, 0]);
    }
}
