//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use chp_core::{CaseData, Mode, UnitParams};

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn normalize(row: &mut [i128]) {
    let g = row.iter().fold(0, |g, &v| gcd(g, v));
    if g > 1 {
        row.iter_mut().for_each(|v| *v /= g);
    }
}

/// Exact feasibility of `{z : a . z <= b}` over integer rows by
/// Fourier-Motzkin elimination. Each row is `[a_1, ..., a_d, b]`.
pub fn fm_feasible(rows: &[Vec<i64>]) -> bool {
    let Some(first) = rows.first() else {
        return true;
    };
    let d = first.len() - 1;
    let mut sys: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    for v in 0..d {
        let (mut pos, mut neg, mut rest) = (Vec::new(), Vec::new(), Vec::new());
        for r in sys {
            match r[v].signum() {
                1 => pos.push(r),
                -1 => neg.push(r),
                _ => rest.push(r),
            }
        }
        for p in &pos {
            for n in &neg {
                let (cp, cn) = (-n[v], p[v]);
                let mut row: Vec<i128> = p.iter().zip(n).map(|(a, b)| a * cp + b * cn).collect();
                normalize(&mut row);
                rest.push(row);
            }
        }
        sys = rest;
    }
    sys.iter().all(|r| r[d] >= 0)
}

/// Whether an on/off sequence respects minimum up and down times, counting
/// the run that was already in progress before hour 1.
pub fn dwell_ok(unit: &UnitParams, x: &[bool]) -> bool {
    let mut state = unit.init_on;
    let mut run = unit.init_dwell as usize;
    for &on in x {
        if on == state {
            run += 1;
            continue;
        }
        let need = if state { unit.min_up } else { unit.min_down } as usize;
        if run < need {
            return false;
        }
        state = on;
        run = 1;
    }
    true
}

/// Cheapest self-schedule value `sum (c - lambda) p + noload x + startup u`
/// found by enumerating every commitment and, for each, searching all
/// integer outputs hour by hour. With integer data the continuous optimum
/// of each commitment lies on the integer grid.
pub fn brute_force_unit(unit: &UnitParams, prices: &[f64]) -> f64 {
    let h = prices.len();
    let lo = unit.p_min.round() as i64;
    let hi = unit.p_max.round() as i64;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << h) {
        let x: Vec<bool> = (0..h).map(|t| mask >> t & 1 == 1).collect();
        if !dwell_ok(unit, &x) {
            continue;
        }
        // (previous output, value) pairs reachable so far.
        let mut frontier: Vec<(f64, f64)> = vec![(unit.init_power, 0.0)];
        let mut prev_on = unit.init_on;
        for t in 0..h {
            let ramp = if t == 0 { unit.initial_ramp } else { unit.ramp };
            let v = unit.startup_ramp;
            let outputs: Vec<f64> = if x[t] { (lo..=hi).map(|p| p as f64).collect() } else { vec![0.0] };
            let fixed = if x[t] { unit.noload_cost } else { 0.0 }
                + if x[t] && !prev_on { unit.startup_cost } else { 0.0 };
            let mut next = Vec::with_capacity(outputs.len());
            for &p in &outputs {
                let up = if prev_on { ramp } else { v };
                let down = if x[t] { ramp } else { v };
                let reach = frontier
                    .iter()
                    .filter(|&&(q, _)| p - q <= up + 1e-9 && q - p <= down + 1e-9)
                    .map(|&(_, val)| val)
                    .fold(f64::INFINITY, f64::min);
                if reach.is_finite() {
                    next.push((p, reach + fixed + (unit.energy_cost - prices[t]) * p));
                }
            }
            frontier = next;
            prev_on = x[t];
            if frontier.is_empty() {
                break;
            }
        }
        if let Some(v) = frontier.iter().map(|f| f.1).reduce(f64::min) {
            best = best.min(v);
        }
    }
    best
}

/// A unit with small integer data, built from raw draws.
#[allow(clippy::too_many_arguments)]
pub fn small_unit(
    p_min: u32,
    span: u32,
    ramp: u32,
    v_extra: u32,
    init_ramp: u32,
    min_up: u32,
    min_down: u32,
    init_on: bool,
    dwell: u32,
    init_frac: u32,
    costs: (u32, u32, u32),
) -> UnitParams {
    let p_max = p_min + span;
    let init_power = if init_on { p_min + init_frac % (span + 1) } else { 0 };
    UnitParams {
        id: "u".into(),
        bus: None,
        p_min: p_min as f64,
        p_max: p_max as f64,
        ramp: ramp as f64,
        startup_ramp: (p_min + v_extra) as f64,
        initial_ramp: init_ramp as f64,
        min_up,
        min_down,
        energy_cost: costs.0 as f64,
        startup_cost: costs.1 as f64,
        noload_cost: costs.2 as f64,
        init_on,
        init_dwell: dwell,
        init_power: init_power as f64,
    }
}

/// A system-mode case around the given units.
pub fn system_case(units: Vec<UnitParams>, demand: Vec<f64>) -> CaseData {
    CaseData {
        horizon: demand.len(),
        mode: Mode::System,
        units,
        system_demand: Some(demand),
        network: None,
    }
}
