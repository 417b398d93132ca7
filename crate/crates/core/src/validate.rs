//! Constraint checks for schedules, flows and complete solutions.
//!
//! Written directly against the constraint statements rather than the
//! interval structure the solvers use, so it can audit their output.

use std::fmt;

use crate::case::{CaseData, NetworkModel, UnitParams};
use crate::dual::UnitSchedule;
use crate::network::FlowState;

/// Tolerance in MW (and radians for the angle identity scaled by reactance).
pub const TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Finding {
    pub subject: String,
    pub hour: Option<usize>,
    pub rule: &'static str,
    pub excess: f64,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.hour {
            Some(t) => write!(f, "{} hour {}: {} (by {:.3e})", self.subject, t + 1, self.rule, self.excess),
            None => write!(f, "{}: {} (by {:.3e})", self.subject, self.rule, self.excess),
        }
    }
}

struct Collector<'a> {
    subject: &'a str,
    out: Vec<Finding>,
}

impl Collector<'_> {
    /// Record a failure when `lhs <= rhs` is violated beyond tolerance.
    fn le(&mut self, hour: Option<usize>, rule: &'static str, lhs: f64, rhs: f64) {
        if !(lhs <= rhs + TOL) {
            self.out.push(Finding {
                subject: self.subject.to_string(),
                hour,
                rule,
                excess: lhs - rhs,
            });
        }
    }

    fn flag(&mut self, hour: Option<usize>, rule: &'static str) {
        self.out.push(Finding {
            subject: self.subject.to_string(),
            hour,
            rule,
            excess: f64::NAN,
        });
    }
}

/// Check capacity, start-up logic, minimum up/down times and ramp limits of
/// one unit schedule, including the transition from the initial state.
pub fn check_schedule(unit: &UnitParams, s: &UnitSchedule) -> Vec<Finding> {
    let mut c = Collector { subject: &unit.id, out: Vec::new() };
    let h = s.p.len();
    if s.x.len() != h || s.u.len() != h {
        c.flag(None, "schedule vectors differ in length");
        return c.out;
    }
    let xf = |b: bool| if b { 1.0 } else { 0.0 };

    // Commitment history: synthesize enough past hours from the initial
    // state to evaluate the windowed sums at the start of the horizon.
    let pad = (unit.min_up.max(unit.min_down) as usize).max(1);
    let dwell = unit.init_dwell as usize;
    let mut hx = Vec::with_capacity(pad + 1 + h);
    let mut hu = Vec::with_capacity(pad + 1 + h);
    for back in (0..=pad).rev() {
        // `back` hours before hour 1; back == 0 is the hour just before.
        // The initial state began `dwell` hours ago, the opposite state
        // held before that.
        hx.push(if back < dwell { unit.init_on } else { !unit.init_on });
        hu.push(unit.init_on && back + 1 == dwell);
    }
    hx.extend(s.x.iter().copied());
    hu.extend(s.u.iter().copied());
    let off = pad + 1;

    for t in 0..h {
        let x = xf(s.x[t]);
        c.le(Some(t), "output below minimum", x * unit.p_min, s.p[t]);
        c.le(Some(t), "output above maximum", s.p[t], x * unit.p_max);
        let prev = xf(hx[off + t - 1]);
        c.le(Some(t), "start-up flag missing", x - prev, xf(s.u[t]));
        if s.u[t] && prev == x {
            c.flag(Some(t), "start-up flag not minimal");
        }

        let j = off + t;
        // Minimum up time: starts within the last l hours keep the unit on.
        let l_up = unit.min_up as usize;
        let starts_up: f64 = (j + 1 - l_up.min(j + 1)..=j).map(|k| xf(hu[k])).sum();
        c.le(Some(t), "minimum up time", starts_up, x);
        // Minimum down time: a start within the last L hours requires the
        // unit to have been off L hours ago.
        let l_down = unit.min_down as usize;
        if j >= l_down {
            let starts_down: f64 = (j + 1 - l_down..=j).map(|k| xf(hu[k])).sum();
            c.le(Some(t), "minimum down time", starts_down, 1.0 - xf(hx[j - l_down]));
        }

        let (p_prev, x_prev, ramp) = if t == 0 {
            (unit.init_power, xf(unit.init_on), unit.initial_ramp)
        } else {
            (s.p[t - 1], xf(s.x[t - 1]), unit.ramp)
        };
        let v = unit.startup_ramp;
        c.le(Some(t), "ramp-up limit", s.p[t] - p_prev, ramp * x_prev + v * (1.0 - x_prev));
        c.le(Some(t), "ramp-down limit", p_prev - s.p[t], ramp * x + v * (1.0 - x));
    }
    c.out
}

/// Check the angle-flow identity, the reference angle and line limits.
pub fn check_flows(net: &NetworkModel, flows: &FlowState) -> Vec<Finding> {
    let mut out = Vec::new();
    for t in 0..flows.f.len() {
        let theta = &flows.theta[t];
        let mut c = Collector { subject: "network", out: Vec::new() };
        if theta.len() != net.bus_count || flows.f[t].len() != net.lines.len() {
            c.flag(Some(t), "flow dimensions");
            out.extend(c.out);
            continue;
        }
        c.le(Some(t), "reference angle", theta[net.reference_index()].abs(), 0.0);
        for (l, line) in net.lines.iter().enumerate() {
            let f = flows.f[t][l];
            let implied = (theta[line.from - 1] - theta[line.to - 1]) / line.reactance;
            c.le(Some(t), "flow differs from angle difference", (f - implied).abs(), 0.0);
            c.le(Some(t), "flow below line minimum", line.f_min, f);
            c.le(Some(t), "flow above line maximum", f, line.f_max);
        }
        out.extend(c.out);
    }
    out
}

/// Check every unit schedule, the flows, and the power balance of every
/// hour (per bus in nodal mode).
pub fn check_solution(
    case: &CaseData,
    schedules: &[UnitSchedule],
    flows: Option<&FlowState>,
) -> Vec<Finding> {
    let mut out = Vec::new();
    if schedules.len() != case.units.len() {
        out.push(Finding {
            subject: "solution".into(),
            hour: None,
            rule: "schedule count",
            excess: f64::NAN,
        });
        return out;
    }
    for (u, s) in case.units.iter().zip(schedules) {
        if s.p.len() != case.horizon {
            out.push(Finding {
                subject: u.id.clone(),
                hour: None,
                rule: "schedule length",
                excess: f64::NAN,
            });
            return out;
        }
        out.extend(check_schedule(u, s));
    }
    let mut c = Collector { subject: "balance", out: Vec::new() };
    match case.network() {
        None => {
            for t in 0..case.horizon {
                let supply: f64 = schedules.iter().map(|s| s.p[t]).sum();
                let d = case.total_demand(t);
                c.le(Some(t), "demand not met", (supply - d).abs(), 0.0);
            }
        }
        Some(net) => {
            let Some(fl) = flows else {
                c.flag(None, "nodal solution without flows");
                out.extend(c.out);
                return out;
            };
            if fl.f.len() != case.horizon {
                c.flag(None, "flow hours");
                out.extend(c.out);
                return out;
            }
            out.extend(check_flows(net, fl));
            for t in 0..case.horizon {
                if fl.f[t].len() != net.lines.len() {
                    continue;
                }
                let mut resid: Vec<f64> = net.nodal_demand.iter().map(|r| r[t]).collect();
                for (l, line) in net.lines.iter().enumerate() {
                    resid[line.from - 1] += fl.f[t][l];
                    resid[line.to - 1] -= fl.f[t][l];
                }
                for (i, s) in schedules.iter().enumerate() {
                    resid[case.unit_row(i)] -= s.p[t];
                }
                for r in resid {
                    c.le(Some(t), "nodal balance", r.abs(), 0.0);
                }
            }
        }
    }
    out.extend(c.out);
    out
}
