//! End-to-end runs of the surrogate method on small cases.

mod common;

use chp_core::dual::{exact_dual, lagrangian, violation, Multipliers};
use chp_core::validate::{check_flows, check_schedule, check_solution};
use chp_core::{cases, load_case, run, SlrConfig};

use common::{small_unit, system_case};

fn config(max_iters: usize) -> SlrConfig {
    SlrConfig {
        max_iters,
        max_seconds: 120.0,
        worker_count: 1,
        retain_iterates: true,
        ..SlrConfig::default()
    }
}

#[test]
fn example_run_is_consistent() {
    let case = load_case(cases::EXAMPLE1).unwrap();
    let bundle = run(&case, &config(200)).unwrap();
    assert!(!bundle.iterates.is_empty());
    for it in &bundle.iterates {
        for (u, s) in case.units.iter().zip(&it.schedules) {
            assert!(check_schedule(u, s).is_empty(), "iteration {}", it.k);
        }
        let l = lagrangian(&case, &it.multipliers, &it.schedules, None).unwrap();
        assert!((l - it.l_tilde).abs() <= 1e-9 * l.abs().max(1.0));
        let g = violation(&case, &it.schedules, None).unwrap();
        assert_eq!(g, it.g);
        assert!(it.exact);
    }

    let mut q_prev = f64::NEG_INFINITY;
    let mut qbar_prev = f64::INFINITY;
    for r in &bundle.history {
        assert!(r.q_best >= q_prev);
        assert!(r.qbar_best <= qbar_prev);
        q_prev = r.q_best;
        qbar_prev = r.qbar_best;
    }

    let feasible = bundle.feasible.as_ref().expect("a feasible solution");
    assert!(feasible.feasible);
    assert!(check_solution(&case, &feasible.schedules, None).is_empty());
    for r in &bundle.history {
        if let Some(q) = r.q_exact {
            assert!(q <= feasible.cost * (1.0 + 1e-6));
        }
    }
    let ledger = &bundle.ledger;
    assert!(ledger.quality < ledger.duality_gap);
}

#[test]
fn worker_count_does_not_change_history() {
    let case = load_case(cases::EXAMPLE1).unwrap();
    let one = run(&case, &SlrConfig { retain_iterates: false, ..config(60) }).unwrap();
    let two = run(&case, &SlrConfig { worker_count: 2, retain_iterates: false, ..config(60) }).unwrap();
    assert_eq!(one.history, two.history);
    assert_eq!(one.prices, two.prices);
}

#[test]
fn accepted_bounds_dominate_grid_dual_optimum() {
    let a = small_unit(10, 40, 25, 10, 25, 2, 1, false, 2, 0, (30, 150, 10));
    let b = small_unit(5, 25, 15, 20, 15, 1, 2, true, 3, 12, (45, 40, 0));
    let demand = vec![30.0, 60.0, 45.0];
    let case = system_case(vec![a, b], demand);

    // The dual optimum is at least the best value seen on a price grid.
    let mut q_grid = f64::NEG_INFINITY;
    for l1 in (0..=100).step_by(2) {
        for l2 in (0..=100).step_by(2) {
            for l3 in (0..=100).step_by(2) {
                let lambda = Multipliers::new(&case, vec![l1 as f64, l2 as f64, l3 as f64]).unwrap();
                q_grid = q_grid.max(exact_dual(&case, &lambda).unwrap().value);
            }
        }
    }
    let bundle = run(&case, &SlrConfig { quality_tol: 1e-4, ..config(3000) }).unwrap();
    for event in &bundle.ledger.window_events {
        if event.accepted {
            assert!(event.qbar >= q_grid - 1e-6 * q_grid.abs(), "{} < {q_grid}", event.qbar);
        }
    }
    assert!(bundle.ledger.window_events.iter().any(|e| e.accepted));
}

#[test]
fn short_nodal_run_keeps_every_schedule_valid() {
    let case = load_case(cases::IEEE118_TX).unwrap();
    let net = case.network().unwrap();
    let bundle = run(&case, &config(4)).unwrap();
    assert_eq!(bundle.iterations(), 4);
    for it in &bundle.iterates {
        for (u, s) in case.units.iter().zip(&it.schedules) {
            assert!(check_schedule(u, s).is_empty());
        }
        let flows = it.flows.as_ref().expect("nodal iterates carry flows");
        assert!(check_flows(net, flows).is_empty());
    }
    let feasible = bundle.feasible.as_ref().expect("a feasible solution");
    assert!(check_solution(&case, &feasible.schedules, feasible.flows.as_ref()).is_empty());
    assert!(bundle.ledger.q_best <= feasible.cost);
}
