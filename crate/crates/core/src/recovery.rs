//! Feasible schedules from relaxed solutions: commitment repair followed by a
//! ramp- and network-constrained economic dispatch.

use thiserror::Error;

use crate::case::{merit_order, CaseData, UnitParams};
use crate::dual::UnitSchedule;
use crate::lp::{self, LinearProgram, LpError, LpStatus, Relation};
use crate::network::{flow_of_angles, FlowState};
use crate::validate;

#[derive(Debug, Error)]
pub enum RecoveryError {
    #[error("hour {hour}: demand {demand:.3} MW exceeds total capacity {capacity:.3} MW")]
    Irreparable { hour: usize, demand: f64, capacity: f64 },
    #[error("expected {expected} commitment rows, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("dispatch is infeasible for the repaired commitment")]
    DispatchInfeasible,
    #[error("no feasible solution after {0} repair attempts")]
    Exhausted(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// A complete schedule with its operating cost.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleSolution {
    pub schedules: Vec<UnitSchedule>,
    pub flows: Option<FlowState>,
    pub cost: f64,
    /// Whether the independent validator accepted the solution.
    pub feasible: bool,
}

/// Commitment matrix, `x[i][t]`.
pub type Commitment = Vec<Vec<bool>>;

fn intervals(x: &[bool]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut t = 0;
    while t < x.len() {
        if x[t] {
            let a = t;
            while t + 1 < x.len() && x[t + 1] {
                t += 1;
            }
            out.push((a, t));
        }
        t += 1;
    }
    out
}

/// Output range each committed hour can reach given the start-up, shut-down
/// and ramp limits of its on-interval. `None` if some interval cannot be
/// operated at all.
fn reachable(unit: &UnitParams, x: &[bool]) -> Option<(Vec<f64>, Vec<f64>)> {
    let h = x.len();
    let mut lo = vec![0.0; h];
    let mut hi = vec![0.0; h];
    for (a, b) in intervals(x) {
        let carried = a == 0 && unit.init_on;
        for t in a..=b {
            lo[t] = unit.p_min;
            hi[t] = unit.p_max;
        }
        if carried {
            lo[0] = lo[0].max(unit.init_power - unit.initial_ramp);
            hi[0] = hi[0].min(unit.init_power + unit.initial_ramp);
        } else {
            hi[a] = hi[a].min(unit.startup_ramp);
        }
        if b + 1 < h {
            hi[b] = hi[b].min(unit.startup_ramp);
        }
        for t in a + 1..=b {
            hi[t] = hi[t].min(hi[t - 1] + unit.ramp);
            lo[t] = lo[t].max(lo[t - 1] - unit.ramp);
        }
        for t in (a..b).rev() {
            hi[t] = hi[t].min(hi[t + 1] + unit.ramp);
            lo[t] = lo[t].max(lo[t + 1] - unit.ramp);
        }
        if (a..=b).any(|t| lo[t] > hi[t] + 1e-9) {
            return None;
        }
    }
    Some((lo, hi))
}

/// Minimum up/down times and the initial condition, on commitment alone.
fn commitment_valid(unit: &UnitParams, x: &[bool]) -> bool {
    let h = x.len();
    let l_up = unit.min_up as usize;
    let l_down = unit.min_down as usize;
    let ivs = intervals(x);
    if unit.init_on && !x.first().copied().unwrap_or(true) && !unit.can_shut_down_at_start() {
        return false;
    }
    let mut prev_end: Option<usize> = None;
    for &(a, b) in &ivs {
        let carried = a == 0 && unit.init_on;
        let len = b - a + 1;
        if b + 1 < h {
            let need = if carried { unit.forced_on_hours() } else { l_up };
            if len < need {
                return false;
            }
        }
        match prev_end {
            Some(e) if a - e - 1 < l_down => return false,
            None if !carried => {
                let ok = if unit.init_on { a >= l_down } else { a >= unit.forced_off_hours() };
                if !ok {
                    return false;
                }
            }
            _ => {}
        }
        prev_end = Some(b);
    }
    if ivs.is_empty() && unit.init_on {
        return unit.can_shut_down_at_start();
    }
    reachable(unit, x).is_some()
}

struct Totals {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

fn totals(case: &CaseData, x: &Commitment) -> Option<Totals> {
    let h = case.horizon;
    let mut out = Totals { lo: vec![0.0; h], hi: vec![0.0; h] };
    for (u, xi) in case.units.iter().zip(x) {
        let (lo, hi) = reachable(u, xi)?;
        for t in 0..h {
            out.lo[t] += lo[t];
            out.hi[t] += hi[t];
        }
    }
    Some(out)
}

/// Candidate edits of one unit's commitment that add capacity at hour `t`.
fn capacity_edits(unit: &UnitParams, x: &[bool], t: usize) -> Vec<Vec<bool>> {
    let h = x.len();
    let mut edits = Vec::new();
    let fill_gaps = |y: &mut Vec<bool>| {
        // Close off-gaps shorter than the minimum down time.
        let ivs = intervals(y);
        for w in ivs.windows(2) {
            let (_, e) = w[0];
            let (s, _) = w[1];
            if s - e - 1 < unit.min_down as usize {
                for v in y.iter_mut().take(s).skip(e + 1) {
                    *v = true;
                }
            }
        }
        if unit.init_on {
            if let Some(&(s, _)) = intervals(y).first() {
                if s > 0 && s < unit.min_down as usize {
                    for v in y.iter_mut().take(s) {
                        *v = true;
                    }
                }
            }
        }
    };
    if x[t] {
        let (a, b) = intervals(x).into_iter().find(|&(a, b)| a <= t && t <= b).unwrap();
        if a > 0 {
            let mut y = x.to_vec();
            y[a - 1] = true;
            fill_gaps(&mut y);
            edits.push(y);
        }
        if b + 1 < h {
            let mut y = x.to_vec();
            y[b + 1] = true;
            fill_gaps(&mut y);
            edits.push(y);
        }
    } else {
        let mut y = x.to_vec();
        for v in y.iter_mut().skip(t).take(unit.min_up as usize) {
            *v = true;
        }
        fill_gaps(&mut y);
        edits.push(y);
    }
    edits
}

/// Candidate edits of one unit's commitment that remove it from hour `t`.
fn surplus_edits(x: &[bool], t: usize) -> Vec<Vec<bool>> {
    let Some((a, b)) = intervals(x).into_iter().find(|&(a, b)| a <= t && t <= b) else {
        return Vec::new();
    };
    let mut edits = Vec::new();
    let mut whole = x.to_vec();
    whole[a..=b].iter_mut().for_each(|v| *v = false);
    edits.push(whole);
    let mut head = x.to_vec();
    head[t..=b].iter_mut().for_each(|v| *v = false);
    edits.push(head);
    let mut tail = x.to_vec();
    tail[a..=t].iter_mut().for_each(|v| *v = false);
    edits.push(tail);
    edits
}

/// Repair a relaxed commitment so that every hour's demand lies between the
/// reachable minimum and maximum output of the committed units, with
/// `extra_units` additional merit-order units committed in every hour.
pub fn commit_repair(
    case: &CaseData,
    schedules: &[UnitSchedule],
    extra_units: usize,
) -> Result<Commitment, RecoveryError> {
    if schedules.len() != case.units.len() {
        return Err(RecoveryError::Dimension {
            expected: case.units.len(),
            got: schedules.len(),
        });
    }
    let h = case.horizon;
    for t in 0..h {
        let capacity: f64 = case.units.iter().map(|u| u.p_max).sum();
        let demand = case.total_demand(t);
        if demand > capacity + 1e-9 {
            return Err(RecoveryError::Irreparable { hour: t, demand, capacity });
        }
    }
    let order = merit_order(case);
    let mut x: Commitment = schedules.iter().map(|s| s.x.clone()).collect();
    for (i, u) in case.units.iter().enumerate() {
        if !commitment_valid(u, &x[i]) {
            log::debug!("unit {}: relaxed commitment invalid, replaced by initial state", u.id);
            let start = if u.init_on { u.forced_on_hours() } else { 0 };
            x[i] = (start..=h)
                .map(|len| (0..h).map(|t| u.init_on && t < len).collect::<Vec<bool>>())
                .find(|y| commitment_valid(u, y))
                .unwrap_or_else(|| vec![u.init_on; h]);
        }
    }

    for _pass in 0..4 {
        let mut changed = false;
        for t in 0..h {
            let demand = case.total_demand(t);
            let mut extra = 0;
            loop {
                let tot = totals(case, &x).expect("commitment kept reachable");
                let committed_extra = extra >= extra_units;
                if tot.hi[t] >= demand - 1e-9 && committed_extra {
                    break;
                }
                let mut applied = false;
                for &i in &order {
                    let before = reachable(&case.units[i], &x[i]).map_or(0.0, |r| r.1[t]);
                    let need_new_unit = tot.hi[t] >= demand - 1e-9;
                    if need_new_unit && x[i][t] {
                        continue;
                    }
                    for y in capacity_edits(&case.units[i], &x[i], t) {
                        if !commitment_valid(&case.units[i], &y) {
                            continue;
                        }
                        let after = reachable(&case.units[i], &y).map_or(0.0, |r| r.1[t]);
                        if after > before + 1e-9 {
                            x[i] = y;
                            applied = true;
                            break;
                        }
                    }
                    if applied {
                        break;
                    }
                }
                if !applied {
                    break;
                }
                changed = true;
                if tot.hi[t] >= demand - 1e-9 {
                    extra += 1;
                }
            }
        }
        for t in 0..h {
            let demand = case.total_demand(t);
            loop {
                let tot = totals(case, &x).expect("commitment kept reachable");
                if tot.lo[t] <= demand + 1e-9 {
                    break;
                }
                let mut applied = false;
                for &i in order.iter().rev() {
                    if !x[i][t] {
                        continue;
                    }
                    for y in surplus_edits(&x[i], t) {
                        if !commitment_valid(&case.units[i], &y) {
                            continue;
                        }
                        let mut trial = x.clone();
                        trial[i] = y;
                        let Some(nt) = totals(case, &trial) else { continue };
                        let keeps_capacity =
                            (0..h).all(|s| nt.hi[s] >= case.total_demand(s) - 1e-9 || nt.hi[s] >= tot.hi[s]);
                        if keeps_capacity && nt.lo[t] < tot.lo[t] - 1e-9 {
                            x = trial;
                            applied = true;
                            break;
                        }
                    }
                    if applied {
                        break;
                    }
                }
                if !applied {
                    break;
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(x)
}

fn schedules_from(case: &CaseData, x: &Commitment, p: Vec<Vec<f64>>) -> Vec<UnitSchedule> {
    case.units
        .iter()
        .zip(x)
        .zip(p)
        .map(|((u, xi), pi)| {
            let mut s = UnitSchedule { x: xi.clone(), u: vec![false; xi.len()], p: pi };
            s.set_minimal_startups(u.init_on);
            s
        })
        .collect()
}

/// Least-cost dispatch of a fixed commitment. Ramp and line limits are added
/// as rows only when the current solution violates them.
pub fn economic_dispatch(case: &CaseData, x: &Commitment) -> Result<FeasibleSolution, RecoveryError> {
    let h = case.horizon;
    if x.len() != case.units.len() {
        return Err(RecoveryError::Dimension { expected: case.units.len(), got: x.len() });
    }
    let mut col = vec![vec![usize::MAX; h]; case.units.len()];
    let mut vars = Vec::new();
    let mut bounds = Vec::new();
    for (i, u) in case.units.iter().enumerate() {
        for (a, b) in intervals(&x[i]) {
            let carried = a == 0 && u.init_on;
            for t in a..=b {
                let mut lo = u.p_min;
                let mut hi = u.p_max;
                if t == a {
                    if carried {
                        lo = lo.max(u.init_power - u.initial_ramp);
                        hi = hi.min(u.init_power + u.initial_ramp);
                    } else {
                        hi = hi.min(u.startup_ramp);
                    }
                }
                if t == b && b + 1 < h {
                    hi = hi.min(u.startup_ramp);
                }
                if lo > hi {
                    return Err(RecoveryError::DispatchInfeasible);
                }
                col[i][t] = vars.len();
                vars.push((i, t));
                bounds.push((lo, hi));
            }
        }
        if x[i].first() == Some(&false) && u.init_on && u.init_power > u.startup_ramp {
            return Err(RecoveryError::DispatchInfeasible);
        }
    }
    let nv = vars.len();
    let objective: Vec<f64> = vars.iter().map(|&(i, _)| case.units[i].energy_cost).collect();
    let mut prog = LinearProgram::new(objective).with_bounds(bounds);
    for t in 0..h {
        let mut row = vec![0.0; nv];
        for i in 0..case.units.len() {
            if col[i][t] != usize::MAX {
                row[col[i][t]] = 1.0;
            }
        }
        prog.push(row, Relation::Eq, case.total_demand(t));
    }

    // Lazily generated rows: (unit, hour) ramp pairs and (line, hour) limits.
    let mut ramp_added = vec![vec![false; h]; case.units.len()];
    let net = case.network();
    let mut line_added = net.map(|n| vec![vec![false; h]; n.lines.len()]).unwrap_or_default();
    let sol = loop {
        let out = lp::solve_lp(&prog)?;
        if out.status != LpStatus::Optimal {
            return Err(RecoveryError::DispatchInfeasible);
        }
        let p = &out.x;
        let mut added = 0;
        for i in 0..case.units.len() {
            let r = case.units[i].ramp;
            for t in 1..h {
                let (c0, c1) = (col[i][t - 1], col[i][t]);
                if c0 == usize::MAX || c1 == usize::MAX || ramp_added[i][t] {
                    continue;
                }
                if (p[c1] - p[c0]).abs() > r + 1e-7 {
                    ramp_added[i][t] = true;
                    let mut up = vec![0.0; nv];
                    up[c1] = 1.0;
                    up[c0] = -1.0;
                    let down = up.iter().map(|v| -v).collect();
                    prog.push(up, Relation::Le, r);
                    prog.push(down, Relation::Le, r);
                    added += 1;
                }
            }
        }
        if let Some(net) = net {
            let ptdf = net.topology().ptdf();
            for t in 0..h {
                let base: Vec<f64> = net.nodal_demand.iter().map(|r| r[t]).collect();
                for (l, line) in net.lines.iter().enumerate() {
                    if line_added[l][t] {
                        continue;
                    }
                    let shift: f64 = ptdf[l].iter().zip(&base).map(|(a, d)| a * d).sum();
                    let mut coeffs = vec![0.0; nv];
                    let mut flow = -shift;
                    for i in 0..case.units.len() {
                        let c = col[i][t];
                        if c != usize::MAX {
                            let a = ptdf[l][case.unit_row(i)];
                            coeffs[c] = a;
                            flow += a * p[c];
                        }
                    }
                    if flow > line.f_max + 1e-7 || flow < line.f_min - 1e-7 {
                        line_added[l][t] = true;
                        let neg = coeffs.iter().map(|v| -v).collect();
                        prog.push(coeffs, Relation::Le, line.f_max + shift);
                        prog.push(neg, Relation::Le, -(line.f_min + shift));
                        added += 1;
                    }
                }
            }
        }
        if added == 0 {
            break out.x;
        }
    };

    let mut p = vec![vec![0.0; h]; case.units.len()];
    for (k, &(i, t)) in vars.iter().enumerate() {
        p[i][t] = sol[k];
    }
    let schedules = schedules_from(case, x, p);
    let flows = net.map(|net| {
        let topo = net.topology();
        let mut state = FlowState::default();
        for t in 0..h {
            let mut inj: Vec<f64> = net.nodal_demand.iter().map(|r| -r[t]).collect();
            for (i, s) in schedules.iter().enumerate() {
                inj[case.unit_row(i)] += s.p[t];
            }
            let theta = topo.angles_for_injections(&inj);
            state.f.push(flow_of_angles(net, &theta));
            state.theta.push(theta);
        }
        state
    });
    let cost = schedules.iter().zip(&case.units).map(|(s, u)| s.cost(u)).sum();
    let findings = validate::check_solution(case, &schedules, flows.as_ref());
    for f in findings.iter().take(5) {
        log::debug!("recovered solution: {f}");
    }
    Ok(FeasibleSolution {
        schedules,
        flows,
        cost,
        feasible: findings.is_empty(),
    })
}

/// Repair and dispatch, retrying with additional committed units when the
/// dispatch fails.
pub fn recover(case: &CaseData, schedules: &[UnitSchedule], retries: usize) -> Result<FeasibleSolution, RecoveryError> {
    for extra in 0..=retries {
        let x = commit_repair(case, schedules, extra)?;
        match economic_dispatch(case, &x) {
            Ok(sol) if sol.feasible => return Ok(sol),
            Ok(_) => log::debug!("recovery attempt {extra}: dispatch failed validation"),
            Err(RecoveryError::DispatchInfeasible) => log::debug!("recovery attempt {extra}: dispatch infeasible"),
            Err(e) => return Err(e),
        }
    }
    Err(RecoveryError::Exhausted(retries + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::Mode;

    fn unit(id: &str, cost: f64, p_min: f64, p_max: f64) -> UnitParams {
        UnitParams {
            id: id.into(),
            bus: None,
            p_min,
            p_max,
            ramp: p_max,
            startup_ramp: p_max,
            initial_ramp: p_max,
            min_up: 1,
            min_down: 1,
            energy_cost: cost,
            startup_cost: 10.0,
            noload_cost: 1.0,
            init_on: false,
            init_dwell: 1,
            init_power: 0.0,
        }
    }

    fn system(units: Vec<UnitParams>, demand: Vec<f64>) -> CaseData {
        CaseData {
            horizon: demand.len(),
            mode: Mode::System,
            units,
            system_demand: Some(demand),
            network: None,
        }
    }

    fn all_on(h: usize) -> UnitSchedule {
        let mut s = UnitSchedule { x: vec![true; h], u: vec![false; h], p: vec![0.0; h] };
        s.set_minimal_startups(false);
        s
    }

    #[test]
    fn single_unit_dispatch_follows_demand() {
        let c = system(vec![unit("a", 40.0, 10.0, 100.0)], vec![50.0, 60.0, 70.0]);
        let x = vec![vec![true; 3]];
        let sol = economic_dispatch(&c, &x).unwrap();
        assert!(sol.feasible);
        assert_eq!(sol.schedules[0].p, vec![50.0, 60.0, 70.0]);
        assert!((sol.cost - (40.0 * 180.0 + 3.0 + 10.0)).abs() < 1e-9);
    }

    #[test]
    fn cheap_unit_loads_first() {
        let c = system(vec![unit("a", 40.0, 0.0, 100.0), unit("b", 60.0, 0.0, 100.0)], vec![150.0]);
        let sol = economic_dispatch(&c, &vec![vec![true], vec![true]]).unwrap();
        assert_eq!(sol.schedules[0].p, vec![100.0]);
        assert_eq!(sol.schedules[1].p, vec![50.0]);
    }

    #[test]
    fn repair_is_noop_on_feasible_commitment() {
        let c = system(vec![unit("a", 40.0, 10.0, 100.0)], vec![50.0, 60.0]);
        let x = commit_repair(&c, &[all_on(2)], 0).unwrap();
        assert_eq!(x, vec![vec![true, true]]);
    }

    #[test]
    fn repair_commits_in_merit_order() {
        let c = system(vec![unit("a", 65.0, 50.0, 200.0), unit("b", 40.0, 50.0, 200.0)], vec![100.0, 380.0, 100.0]);
        let x = commit_repair(&c, &[UnitSchedule::off(3), UnitSchedule::off(3)], 0).unwrap();
        assert!(x[1][0] && x[1][1] && x[0][1]);
        assert!(!x[0][0]);
    }

    #[test]
    fn repair_rejects_shortfall() {
        let c = system(vec![unit("a", 40.0, 0.0, 100.0)], vec![150.0]);
        assert!(matches!(
            commit_repair(&c, &[UnitSchedule::off(1)], 0),
            Err(RecoveryError::Irreparable { .. })
        ));
    }

    #[test]
    fn ramp_rows_are_generated() {
        let mut u = unit("a", 40.0, 0.0, 100.0);
        u.ramp = 20.0;
        let v = unit("b", 90.0, 0.0, 100.0);
        let c = system(vec![u, v], vec![10.0, 80.0]);
        let sol = economic_dispatch(&c, &vec![vec![true, true], vec![true, true]]).unwrap();
        assert!(sol.feasible);
        let p = &sol.schedules[0].p;
        assert!((p[1] - p[0]).abs() <= 20.0 + 1e-9);
        assert!((p[0] - 10.0).abs() < 1e-9 && (p[1] - 30.0).abs() < 1e-9);
    }
}
