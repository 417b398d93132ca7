//! Price-based self-scheduling of a single unit.
//!
//! With linear energy costs the ramp chain inside one on-interval is
//! independent of every other on-interval: the first hour after a start-up and
//! the last hour before a shut-down are both capped by the start-up ramp, and
//! the offline hours in between carry zero output. The best response is
//! therefore a shortest path over candidate on-intervals `[a, b]`, where each
//! interval's value is the optimum of a small chain LP.
//!
//! The chain LPs are solved exactly by dynamic programming over convex
//! piecewise-linear value functions: moving one hour forward is a windowed
//! minimum (the ramp limit) followed by adding the hour's linear price term.
//! One forward pass from a start hour yields the value of every interval that
//! starts there. [`dispatch_interval_lp`] solves the same problem with the
//! simplex kernel and is kept as a reference implementation.

use thiserror::Error;

use crate::case::UnitParams;
use crate::dual::UnitSchedule;
use crate::lp::{self, LinearProgram, LpStatus, Relation};

#[derive(Debug, Error, PartialEq)]
pub enum UnitError {
    #[error("unit {unit}: no feasible dispatch on hours {start}..={end}")]
    InfeasibleInterval { unit: String, start: usize, end: usize },
    #[error("unit {unit}: hours {start}..={end} are outside the {horizon}-hour price vector")]
    Span {
        unit: String,
        start: usize,
        end: usize,
        horizon: usize,
    },
    #[error("unit {0}: interval solve failed: {1}")]
    Lp(String, String),
}

/// How an on-interval connects to the hours around it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Boundary {
    /// The unit is offline in the hour before the interval (start-up).
    pub starts_here: bool,
    /// The unit is offline in the hour after the interval (shut-down).
    pub ends_here: bool,
    /// Output before the first hour when the interval continues the initial
    /// online state; only meaningful when `starts_here` is false.
    pub initial_power: Option<f64>,
}

/// Optimal dispatch of one on-interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalDispatch {
    /// 0-based inclusive hour span.
    pub start: usize,
    pub end: usize,
    pub p: Vec<f64>,
    /// `sum (c_E - lambda_t) p_t + len * c_N (+ c_S on start-up)`.
    pub value: f64,
}

/// Convex piecewise-linear function on a closed interval, stored by its
/// breakpoints.
#[derive(Debug, Clone)]
struct Pwl {
    xs: Vec<f64>,
    vs: Vec<f64>,
}

const DOMAIN_EPS: f64 = 1e-9;

fn clip_domain(lo: f64, hi: f64) -> Option<(f64, f64)> {
    if lo <= hi {
        Some((lo, hi))
    } else if lo - hi <= DOMAIN_EPS {
        Some((lo, lo))
    } else {
        None
    }
}

impl Pwl {
    fn linear(lo: f64, hi: f64, slope: f64) -> Option<Pwl> {
        let (lo, hi) = clip_domain(lo, hi)?;
        if lo == hi {
            Some(Pwl { xs: vec![lo], vs: vec![slope * lo] })
        } else {
            Some(Pwl {
                xs: vec![lo, hi],
                vs: vec![slope * lo, slope * hi],
            })
        }
    }

    fn lo(&self) -> f64 {
        self.xs[0]
    }

    fn hi(&self) -> f64 {
        *self.xs.last().unwrap()
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] || n == 1 {
            return self.vs[0];
        }
        for k in 1..n {
            if x <= self.xs[k] {
                let (x0, x1) = (self.xs[k - 1], self.xs[k]);
                let w = (x - x0) / (x1 - x0);
                return self.vs[k - 1] + w * (self.vs[k] - self.vs[k - 1]);
            }
        }
        self.vs[n - 1]
    }

    fn add_slope(&mut self, c: f64) {
        for (v, x) in self.vs.iter_mut().zip(&self.xs) {
            *v += c * x;
        }
    }

    fn restrict(&self, lo: f64, hi: f64) -> Option<Pwl> {
        let (lo, hi) = clip_domain(lo.max(self.lo()), hi.min(self.hi()))?;
        let mut xs = vec![lo];
        let mut vs = vec![self.eval(lo)];
        for (&x, &v) in self.xs.iter().zip(&self.vs) {
            if x > lo && x < hi {
                xs.push(x);
                vs.push(v);
            }
        }
        if hi > lo {
            xs.push(hi);
            vs.push(self.eval(hi));
        }
        Some(Pwl { xs, vs })
    }

    /// `g(p) = min { f(q) : |q - p| <= r }`, on the domain widened by `r`.
    fn dilate(&self, r: f64) -> Pwl {
        let vmin = self.vs.iter().copied().fold(f64::INFINITY, f64::min);
        let first = self.vs.iter().position(|&v| v == vmin).unwrap();
        let last = self.vs.iter().rposition(|&v| v == vmin).unwrap();
        let mut xs = Vec::with_capacity(self.xs.len() + 2);
        let mut vs = Vec::with_capacity(self.xs.len() + 2);
        for k in 0..=first {
            xs.push(self.xs[k] - r);
            vs.push(self.vs[k]);
        }
        for k in last..self.xs.len() {
            xs.push(self.xs[k] + r);
            vs.push(self.vs[k]);
        }
        Pwl { xs, vs }
    }

    /// Minimum over `[lo, hi]` and the interval of minimizers.
    fn min_over(&self, lo: f64, hi: f64) -> Option<(f64, f64, f64)> {
        let r = self.restrict(lo, hi)?;
        let vmin = r.vs.iter().copied().fold(f64::INFINITY, f64::min);
        let first = r.vs.iter().position(|&v| v == vmin).unwrap();
        let last = r.vs.iter().rposition(|&v| v == vmin).unwrap();
        Some((vmin, r.xs[first], r.xs[last]))
    }
}

/// Value functions of the ramp chain from hour `start` onwards.
struct Chain<'a> {
    unit: &'a UnitParams,
    prices: &'a [f64],
    start: usize,
    stages: Vec<Pwl>,
}

impl<'a> Chain<'a> {
    fn first_stage(unit: &UnitParams, price: f64, boundary: &Boundary) -> Option<Pwl> {
        let slope = unit.energy_cost - price;
        if boundary.starts_here {
            Pwl::linear(unit.p_min, unit.transition_cap(), slope)
        } else {
            let p0 = boundary.initial_power.unwrap_or(unit.init_power);
            Pwl::linear(
                unit.p_min.max(p0 - unit.initial_ramp),
                unit.p_max.min(p0 + unit.initial_ramp),
                slope,
            )
        }
    }

    fn new(unit: &'a UnitParams, prices: &'a [f64], start: usize, boundary: &Boundary) -> Option<Self> {
        let first = Self::first_stage(unit, prices[start], boundary)?;
        Some(Chain {
            unit,
            prices,
            start,
            stages: vec![first],
        })
    }

    fn last_hour(&self) -> usize {
        self.start + self.stages.len() - 1
    }

    fn advance(&mut self) -> bool {
        let t = self.last_hour() + 1;
        let prev = self.stages.last().unwrap();
        let Some(mut next) = prev.dilate(self.unit.ramp).restrict(self.unit.p_min, self.unit.p_max)
        else {
            return false;
        };
        next.add_slope(self.unit.energy_cost - self.prices[t]);
        self.stages.push(next);
        true
    }

    fn end_window(&self, ends_here: bool) -> (f64, f64) {
        if ends_here {
            (self.unit.p_min, self.unit.transition_cap())
        } else {
            (self.unit.p_min, self.unit.p_max)
        }
    }

    /// Optimal energy value of the chain as it stands.
    fn energy_value(&self, ends_here: bool) -> Option<f64> {
        let (lo, hi) = self.end_window(ends_here);
        self.stages.last().unwrap().min_over(lo, hi).map(|m| m.0)
    }

    /// Recover an optimal output trajectory: lowest optimal final output,
    /// then at every earlier hour the minimizer closest to the next hour.
    fn backtrack(&self, ends_here: bool) -> Option<Vec<f64>> {
        let (lo, hi) = self.end_window(ends_here);
        let (_, left, _) = self.stages.last().unwrap().min_over(lo, hi)?;
        let mut p = vec![0.0; self.stages.len()];
        let last = self.stages.len() - 1;
        p[last] = left;
        for k in (0..last).rev() {
            let next = p[k + 1];
            let r = self.unit.ramp;
            let (_, l, h) = self.stages[k].min_over(next - r, next + r)?;
            p[k] = next.clamp(l, h);
        }
        Some(p)
    }
}

fn fixed_cost(unit: &UnitParams, len: usize, starts_here: bool) -> f64 {
    len as f64 * unit.noload_cost + if starts_here { unit.startup_cost } else { 0.0 }
}

fn check_span(unit: &UnitParams, start: usize, end: usize, horizon: usize) -> Result<(), UnitError> {
    if start > end || end >= horizon {
        return Err(UnitError::Span {
            unit: unit.id.clone(),
            start,
            end,
            horizon,
        });
    }
    Ok(())
}

/// Optimal output over one on-interval `start..=end` (0-based hours) for the
/// given hourly prices.
pub fn dispatch_interval(
    unit: &UnitParams,
    start: usize,
    end: usize,
    prices: &[f64],
    boundary: Boundary,
) -> Result<IntervalDispatch, UnitError> {
    check_span(unit, start, end, prices.len())?;
    let infeasible = || UnitError::InfeasibleInterval {
        unit: unit.id.clone(),
        start,
        end,
    };
    let mut chain = Chain::new(unit, prices, start, &boundary).ok_or_else(infeasible)?;
    while chain.last_hour() < end {
        if !chain.advance() {
            return Err(infeasible());
        }
    }
    let p = chain.backtrack(boundary.ends_here).ok_or_else(infeasible)?;
    let energy: f64 = p
        .iter()
        .zip(&prices[start..=end])
        .map(|(p, l)| (unit.energy_cost - l) * p)
        .sum();
    Ok(IntervalDispatch {
        start,
        end,
        value: energy + fixed_cost(unit, p.len(), boundary.starts_here),
        p,
    })
}

/// [`dispatch_interval`] computed as a linear program with the simplex kernel.
pub fn dispatch_interval_lp(
    unit: &UnitParams,
    start: usize,
    end: usize,
    prices: &[f64],
    boundary: Boundary,
) -> Result<IntervalDispatch, UnitError> {
    check_span(unit, start, end, prices.len())?;
    let len = end - start + 1;
    let objective: Vec<f64> = prices[start..=end]
        .iter()
        .map(|l| unit.energy_cost - l)
        .collect();
    let mut bounds = vec![(unit.p_min, unit.p_max); len];
    if boundary.starts_here {
        bounds[0].1 = bounds[0].1.min(unit.startup_ramp);
    } else {
        let p0 = boundary.initial_power.unwrap_or(unit.init_power);
        bounds[0].0 = bounds[0].0.max(p0 - unit.initial_ramp);
        bounds[0].1 = bounds[0].1.min(p0 + unit.initial_ramp);
    }
    if boundary.ends_here {
        bounds[len - 1].1 = bounds[len - 1].1.min(unit.startup_ramp);
    }
    let infeasible = || UnitError::InfeasibleInterval {
        unit: unit.id.clone(),
        start,
        end,
    };
    if bounds.iter().any(|(lo, hi)| lo > hi) {
        return Err(infeasible());
    }
    let mut prog = LinearProgram::new(objective).with_bounds(bounds);
    for k in 0..len.saturating_sub(1) {
        let mut up = vec![0.0; len];
        up[k + 1] = 1.0;
        up[k] = -1.0;
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        prog.push(up, Relation::Le, unit.ramp);
        prog.push(down, Relation::Le, unit.ramp);
    }
    let out = lp::solve_lp(&prog).map_err(|e| UnitError::Lp(unit.id.clone(), e.to_string()))?;
    if out.status != LpStatus::Optimal {
        return Err(infeasible());
    }
    Ok(IntervalDispatch {
        start,
        end,
        value: out.objective + fixed_cost(unit, len, boundary.starts_here),
        p: out.x,
    })
}

/// `z_i - sum_t lambda_t p_t` of a schedule under the given prices.
pub fn schedule_value(unit: &UnitParams, prices: &[f64], s: &UnitSchedule) -> f64 {
    let mut v = 0.0;
    for t in 0..s.p.len() {
        v += (unit.energy_cost - prices[t]) * s.p[t];
        if s.x[t] {
            v += unit.noload_cost;
        }
        if s.u[t] {
            v += unit.startup_cost;
        }
    }
    v
}

/// Lexicographic DP label: value, then committed hours, then first start.
#[derive(Debug, Clone, Copy)]
struct Label {
    value: f64,
    on_hours: usize,
    first_start: usize,
}

impl Label {
    fn better_than(&self, other: &Label) -> bool {
        let tol = 1e-9 * (1.0 + self.value.abs().max(other.value.abs()));
        if self.value < other.value - tol {
            return true;
        }
        if self.value > other.value + tol {
            return false;
        }
        (self.on_hours, self.first_start) < (other.on_hours, other.first_start)
    }
}

/// Globally optimal self-schedule of one unit: minimizes
/// `z_i - sum_t lambda_t p_t` subject to capacity, start-up, minimum up/down
/// and ramp constraints, honouring the initial condition.
pub fn best_response(unit: &UnitParams, prices: &[f64]) -> (UnitSchedule, f64) {
    let horizon = prices.len();
    let l_up = unit.min_up as usize;
    let l_down = unit.min_down as usize;
    let forced_on = unit.forced_on_hours();
    let forced_off = unit.forced_off_hours();

    // values[a][b - a]: energy + fixed value of on-interval [a, b].
    let mut values: Vec<Vec<Option<f64>>> = vec![Vec::new(); horizon];
    for a in 0..horizon {
        let carried = a == 0 && unit.init_on;
        if !carried && a < forced_off {
            values[a] = vec![None; horizon - a];
            continue;
        }
        let boundary = Boundary {
            starts_here: !carried,
            ends_here: false,
            initial_power: carried.then_some(unit.init_power),
        };
        let mut row = Vec::with_capacity(horizon - a);
        if let Some(mut chain) = Chain::new(unit, prices, a, &boundary) {
            loop {
                let b = chain.last_hour();
                let len = b - a + 1;
                let ends_here = b + 1 < horizon;
                let allowed = if carried {
                    !ends_here || len >= forced_on
                } else {
                    !ends_here || len >= l_up
                };
                let v = if allowed {
                    chain
                        .energy_value(ends_here)
                        .map(|e| e + fixed_cost(unit, len, !carried))
                } else {
                    None
                };
                row.push(v);
                if b + 1 == horizon || !chain.advance() {
                    break;
                }
            }
        }
        row.resize(horizon - a, None);
        values[a] = row;
    }

    // best[b]: best schedule of hours 0..=b whose last on-interval ends at b.
    let mut best: Vec<Option<(Label, usize, Option<usize>)>> = vec![None; horizon];
    let off_at_start_ok = !unit.init_on || unit.can_shut_down_at_start();
    for b in 0..horizon {
        let mut cand: Option<(Label, usize, Option<usize>)> = None;
        for a in 0..=b {
            let Some(v) = values[a][b - a] else { continue };
            let len = b - a + 1;
            let carried = a == 0 && unit.init_on;
            let mut consider = |label: Label, prev: Option<usize>| {
                if cand.as_ref().map_or(true, |c| label.better_than(&c.0)) {
                    cand = Some((label, a, prev));
                }
            };
            if carried {
                consider(Label { value: v, on_hours: len, first_start: 0 }, None);
                continue;
            }
            // First interval of the horizon.
            let first_ok = if unit.init_on {
                off_at_start_ok && a >= l_down
            } else {
                a >= forced_off
            };
            if first_ok {
                consider(Label { value: v, on_hours: len, first_start: a }, None);
            }
            // Preceded by an interval ending at `pb` with enough downtime.
            if a > l_down {
                for pb in 0..a - l_down {
                    if let Some((lbl, _, _)) = best[pb] {
                        consider(
                            Label {
                                value: lbl.value + v,
                                on_hours: lbl.on_hours + len,
                                first_start: lbl.first_start,
                            },
                            Some(pb),
                        );
                    }
                }
            }
        }
        best[b] = cand;
    }

    let mut choice: Option<(Label, Option<usize>)> = None;
    if off_at_start_ok {
        choice = Some((Label { value: 0.0, on_hours: 0, first_start: horizon }, None));
    }
    for b in 0..horizon {
        if let Some((lbl, _, _)) = best[b] {
            if choice.as_ref().map_or(true, |c| lbl.better_than(&c.0)) {
                choice = Some((lbl, Some(b)));
            }
        }
    }

    let mut intervals = Vec::new();
    let mut cursor = choice.and_then(|c| c.1);
    while let Some(b) = cursor {
        let (_, a, prev) = best[b].expect("backtracked state exists");
        intervals.push((a, b));
        cursor = prev;
    }
    intervals.reverse();

    let mut sched = UnitSchedule::off(horizon);
    for &(a, b) in &intervals {
        let carried = a == 0 && unit.init_on;
        let d = dispatch_interval(
            unit,
            a,
            b,
            prices,
            Boundary {
                starts_here: !carried,
                ends_here: b + 1 < horizon,
                initial_power: carried.then_some(unit.init_power),
            },
        )
        .expect("interval selected by the DP is feasible");
        for (k, t) in (a..=b).enumerate() {
            sched.x[t] = true;
            sched.p[t] = d.p[k];
        }
    }
    sched.set_minimal_startups(unit.init_on);
    let value = schedule_value(unit, prices, &sched);
    (sched, value)
}

/// Improve on an incumbent schedule: returns the best response when it is
/// strictly better, otherwise keeps the incumbent.
pub fn improve(unit: &UnitParams, prices: &[f64], incumbent: &UnitSchedule) -> (UnitSchedule, f64) {
    let (cand, value) = best_response(unit, prices);
    let current = schedule_value(unit, prices, incumbent);
    if value < current - 1e-9 * (1.0 + current.abs()) {
        (cand, value)
    } else {
        (incumbent.clone(), current)
    }
}
