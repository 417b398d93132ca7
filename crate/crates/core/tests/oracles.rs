//! Solvers checked against brute-force oracles on small instances.

mod common;

use chp_core::bound::{DivergenceWindow, WindowStatus};
use chp_core::dual::{exact_dual, Multipliers};
use chp_core::lp::{self, LinearProgram, LpStatus, Relation};
use chp_core::unit::{best_response, schedule_value};
use chp_core::validate::check_schedule;
use proptest::prelude::*;

use common::{brute_force_unit, fm_feasible, small_unit, system_case};

fn to_f64(rows: &[Vec<i64>]) -> Vec<(Vec<f64>, f64)> {
    rows.iter()
        .map(|r| {
            let (a, b) = r.split_at(r.len() - 1);
            (a.iter().map(|&v| v as f64).collect(), b[0] as f64)
        })
        .collect()
}

fn small_system() -> impl Strategy<Value = Vec<Vec<i64>>> {
    prop::collection::vec(
        (prop::collection::vec(-2i64..=2, 3), -4i64..=4).prop_map(|(mut a, b)| {
            a.push(b);
            a
        }),
        1..=6,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn phase_one_matches_elimination(rows in small_system()) {
        let got = lp::feasible(&to_f64(&rows)).unwrap();
        prop_assert_eq!(got, fm_feasible(&rows), "rows {:?}", rows);
    }

    #[test]
    fn optimal_objective_matches_point(
        rows in small_system(),
        c in prop::collection::vec(-3i64..=3, 3),
    ) {
        // Box the variables so the program is never unbounded.
        let mut prog = LinearProgram::new(c.iter().map(|&v| v as f64).collect())
            .with_bounds(vec![(-10.0, 10.0); 3]);
        for (a, b) in to_f64(&rows) {
            prog.push(a, Relation::Le, b);
        }
        let out = lp::solve_lp(&prog).unwrap();
        if out.status == LpStatus::Optimal {
            let recomputed: f64 = c.iter().zip(&out.x).map(|(&ci, x)| ci as f64 * x).sum();
            prop_assert!((recomputed - out.objective).abs() <= 1e-9 * recomputed.abs().max(1.0));
            for (a, b) in to_f64(&rows) {
                let lhs: f64 = a.iter().zip(&out.x).map(|(a, x)| a * x).sum();
                prop_assert!(lhs <= b + 1e-9 * b.abs().max(1.0));
            }
        }
    }
}

fn unit_strategy() -> impl Strategy<Value = chp_core::UnitParams> {
    (
        (0u32..=10, 1u32..=12, 1u32..=12, 0u32..=14, 1u32..=12),
        (1u32..=3, 1u32..=3, any::<bool>(), 1u32..=4, 0u32..=20),
        (0u32..=60, 0u32..=300, 0u32..=50),
    )
        .prop_map(|((pmin, span, ramp, vx, ir), (up, down, on, dwell, frac), costs)| {
            small_unit(pmin, span, ramp, vx, ir, up, down, on, dwell, frac, costs)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn best_response_matches_enumeration(
        unit in unit_strategy(),
        prices in prop::collection::vec(0u32..=90, 1..=5),
    ) {
        let prices: Vec<f64> = prices.into_iter().map(f64::from).collect();
        let (schedule, value) = best_response(&unit, &prices);
        let oracle = brute_force_unit(&unit, &prices);
        prop_assert!((value - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "dp {} oracle {}", value, oracle);
        prop_assert!(check_schedule(&unit, &schedule).is_empty());
        prop_assert!((schedule_value(&unit, &prices, &schedule) - value).abs() <= 1e-6 * value.abs().max(1.0));
    }
}

#[test]
fn two_unit_dual_matches_pattern_enumeration() {
    let a = small_unit(10, 40, 20, 10, 20, 1, 1, false, 2, 0, (30, 200, 5));
    let b = small_unit(20, 30, 10, 15, 10, 2, 2, true, 3, 10, (20, 500, 0));
    let demand = vec![40.0, 70.0];
    let case = system_case(vec![a.clone(), b.clone()], demand.clone());
    for l1 in (0..=80).step_by(8) {
        for l2 in (0..=80).step_by(8) {
            let prices = vec![l1 as f64, l2 as f64];
            let lambda = Multipliers::new(&case, prices.clone()).unwrap();
            let q = exact_dual(&case, &lambda).unwrap().value;
            // Separable relaxation: each unit over its 4 commitment patterns
            // (16 joint patterns), plus the price of demand.
            let oracle = brute_force_unit(&a, &prices)
                + brute_force_unit(&b, &prices)
                + prices.iter().zip(&demand).map(|(l, d)| l * d).sum::<f64>();
            assert!((q - oracle).abs() <= 1e-6 * oracle.abs().max(1.0), "at {prices:?}: {q} vs {oracle}");
        }
    }
}

/// Integer rows of the steps of `seq`, as `[a..., b]`.
fn integer_rows(seq: &[Vec<i64>]) -> Vec<Vec<i64>> {
    seq.windows(2)
        .map(|w| {
            let (p, n) = (&w[0], &w[1]);
            let mut row: Vec<i64> = p.iter().zip(n).map(|(p, n)| 2 * (p - n)).collect();
            row.push(p.iter().map(|v| v * v).sum::<i64>() - n.iter().map(|v| v * v).sum::<i64>());
            row
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(3000))]

    #[test]
    fn window_decisions_match_elimination(
        seq in (1usize..=3).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-100i64..=100, d), 2..=6)),
    ) {
        let pts: Vec<Vec<f64>> = seq.iter().map(|p| p.iter().map(|&v| v as f64).collect()).collect();
        let mut w = DivergenceWindow::new(0, &pts[0]);
        let rows = integer_rows(&seq);
        for (n, p) in pts.iter().enumerate().skip(1) {
            let status = w.extend(p).unwrap();
            let expect = if fm_feasible(&rows[..n]) { WindowStatus::Open } else { WindowStatus::Infeasible };
            prop_assert_eq!(status, expect, "after {} steps of {:?}", n, seq);
            if status == WindowStatus::Infeasible {
                break;
            }
        }
    }
}
