//! Lagrangian, constraint violations and dual function evaluation.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::case::{CaseData, Mode, UnitParams};
use crate::network::{self, FlowState, NetworkError};
use crate::unit;

#[derive(Debug, Error)]
pub enum DualError {
    #[error("{what}: expected {expected} entries, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("nodal case requires flows")]
    MissingFlows,
    #[error("multipliers contain a non-finite entry")]
    NotFinite,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Prices on the relaxed balance constraints, stored bus-major: the entry of
/// bus `n` and hour `t` sits at `n * horizon + t`. System mode has one row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    mode: Mode,
    horizon: usize,
    values: Vec<f64>,
}

impl Multipliers {
    pub fn new(case: &CaseData, values: Vec<f64>) -> Result<Self, DualError> {
        let expected = case.balance_rows() * case.horizon;
        if values.len() != expected {
            return Err(DualError::Dimension {
                what: "multipliers",
                expected,
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(DualError::NotFinite);
        }
        Ok(Multipliers {
            mode: case.mode,
            horizon: case.horizon,
            values,
        })
    }

    pub fn constant(case: &CaseData, value: f64) -> Self {
        Multipliers {
            mode: case.mode,
            horizon: case.horizon,
            values: vec![value; case.balance_rows() * case.horizon],
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.horizon.max(1)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, row: usize, t: usize) -> f64 {
        self.values[row * self.horizon + t]
    }

    /// Prices of one balance row over the horizon.
    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.horizon..(row + 1) * self.horizon]
    }

    /// Prices of every balance row in hour `t`.
    pub fn column(&self, t: usize) -> Vec<f64> {
        (0..self.rows()).map(|n| self.get(n, t)).collect()
    }

    /// `self + s * g`, entrywise.
    pub fn stepped(&self, s: f64, g: &[f64]) -> Multipliers {
        Multipliers {
            mode: self.mode,
            horizon: self.horizon,
            values: self.values.iter().zip(g).map(|(l, g)| l + s * g).collect(),
        }
    }
}

impl fmt::Display for Multipliers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} multipliers {}x{}", self.mode, self.rows(), self.horizon)
    }
}

/// Commitment and dispatch of one unit over the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitSchedule {
    pub x: Vec<bool>,
    pub u: Vec<bool>,
    pub p: Vec<f64>,
}

impl UnitSchedule {
    pub fn off(horizon: usize) -> Self {
        UnitSchedule {
            x: vec![false; horizon],
            u: vec![false; horizon],
            p: vec![0.0; horizon],
        }
    }

    /// Set `u_t = max(0, x_t - x_{t-1})` with `x_0` from the initial state.
    pub fn set_minimal_startups(&mut self, init_on: bool) {
        let mut prev = init_on;
        for t in 0..self.x.len() {
            self.u[t] = self.x[t] && !prev;
            prev = self.x[t];
        }
    }

    /// Operating cost `sum_t c_E p + c_S u + c_N x`.
    pub fn cost(&self, unit: &UnitParams) -> f64 {
        (0..self.p.len())
            .map(|t| {
                unit.energy_cost * self.p[t]
                    + if self.u[t] { unit.startup_cost } else { 0.0 }
                    + if self.x[t] { unit.noload_cost } else { 0.0 }
            })
            .sum()
    }

    pub fn on_hours(&self) -> usize {
        self.x.iter().filter(|x| **x).count()
    }
}

/// One iteration of the surrogate method.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateIterate {
    pub k: usize,
    pub multipliers: Multipliers,
    pub schedules: Vec<UnitSchedule>,
    pub flows: Option<FlowState>,
    pub l_tilde: f64,
    /// Violations in the multiplier layout.
    pub g: Vec<f64>,
    pub g_norm: f64,
    pub stepsize: f64,
    pub exact: bool,
}

/// Minimizer of the relaxed problem at given prices.
#[derive(Debug, Clone, PartialEq)]
pub struct DualPoint {
    pub value: f64,
    pub schedules: Vec<UnitSchedule>,
    pub flows: Option<FlowState>,
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), DualError> {
    if expected != got {
        return Err(DualError::Dimension { what, expected, got });
    }
    Ok(())
}

fn check_inputs(
    case: &CaseData,
    schedules: &[UnitSchedule],
    flows: Option<&FlowState>,
) -> Result<(), DualError> {
    check_len("schedules", case.units.len(), schedules.len())?;
    for s in schedules {
        check_len("schedule hours", case.horizon, s.p.len())?;
        check_len("schedule hours", case.horizon, s.x.len())?;
        check_len("schedule hours", case.horizon, s.u.len())?;
    }
    if let Some(net) = case.network() {
        let fl = flows.ok_or(DualError::MissingFlows)?;
        check_len("flow hours", case.horizon, fl.f.len())?;
        for row in &fl.f {
            check_len("line flows", net.lines.len(), row.len())?;
        }
    }
    Ok(())
}

/// Balance violations: `D - sum p` per hour, or per bus and hour with the
/// net line outflow added in nodal mode. Positive entries mean shortage.
pub fn violation(
    case: &CaseData,
    schedules: &[UnitSchedule],
    flows: Option<&FlowState>,
) -> Result<Vec<f64>, DualError> {
    check_inputs(case, schedules, flows)?;
    let h = case.horizon;
    let mut g = vec![0.0; case.balance_rows() * h];
    match case.network() {
        None => {
            let demand = case.system_demand.as_deref().unwrap_or(&[]);
            g[..h].copy_from_slice(&demand[..h]);
        }
        Some(net) => {
            for (n, row) in net.nodal_demand.iter().enumerate() {
                g[n * h..(n + 1) * h].copy_from_slice(&row[..h]);
            }
            let fl = flows.expect("checked above");
            for t in 0..h {
                for (l, line) in net.lines.iter().enumerate() {
                    let f = fl.f[t][l];
                    g[(line.from - 1) * h + t] += f;
                    g[(line.to - 1) * h + t] -= f;
                }
            }
        }
    }
    for (i, s) in schedules.iter().enumerate() {
        let row = case.unit_row(i);
        for t in 0..h {
            g[row * h + t] -= s.p[t];
        }
    }
    Ok(g)
}

/// `sum_i z_i + lambda . g`.
pub fn lagrangian(
    case: &CaseData,
    lambda: &Multipliers,
    schedules: &[UnitSchedule],
    flows: Option<&FlowState>,
) -> Result<f64, DualError> {
    let g = violation(case, schedules, flows)?;
    check_len("multipliers", g.len(), lambda.as_slice().len())?;
    let cost: f64 = schedules
        .iter()
        .zip(&case.units)
        .map(|(s, u)| s.cost(u))
        .sum();
    let dot: f64 = lambda.as_slice().iter().zip(&g).map(|(l, g)| l * g).sum();
    Ok(cost + dot)
}

/// Evaluate the dual function by solving every subproblem exactly. Unit and
/// hour solves run on the current rayon pool; results are combined in a fixed
/// order so the value does not depend on the number of workers.
pub fn exact_dual(case: &CaseData, lambda: &Multipliers) -> Result<DualPoint, DualError> {
    check_len(
        "multipliers",
        case.balance_rows() * case.horizon,
        lambda.as_slice().len(),
    )?;
    let responses: Vec<(UnitSchedule, f64)> = (0..case.units.len())
        .into_par_iter()
        .map(|i| unit::best_response(&case.units[i], lambda.row(case.unit_row(i))))
        .collect();
    let flows = match case.network() {
        None => None,
        Some(net) => {
            let slices: Vec<_> = (0..case.horizon)
                .into_par_iter()
                .map(|t| network::flow_best_response(net, &lambda.column(t)))
                .collect::<Result<_, _>>()?;
            let mut state = FlowState::default();
            for s in slices {
                state.theta.push(s.theta);
                state.f.push(s.f);
            }
            Some(state)
        }
    };
    let schedules: Vec<UnitSchedule> = responses.into_iter().map(|r| r.0).collect();
    let value = lagrangian(case, lambda, &schedules, flows.as_ref())?;
    Ok(DualPoint {
        value,
        schedules,
        flows,
    })
}

/// Whether `l_new` strictly improves on `l_prev`, both evaluated at the same
/// multipliers, beyond a relative tolerance.
pub fn surrogate_condition_holds(l_new: f64, l_prev: f64) -> bool {
    l_new < l_prev - 1e-9 * l_prev.abs().max(1.0)
}
