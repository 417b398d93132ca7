//! The surrogate Lagrangian relaxation loop.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bound::{BoundError, BoundsLedger, DivergenceWindow, StepTerm, WindowEvent, WindowStatus};
use crate::case::{merit_order, CaseData};
use crate::dual::{self, DualError, Multipliers, SurrogateIterate, UnitSchedule};
use crate::network::{self, FlowState};
use crate::recovery::{self, FeasibleSolution};
use crate::unit;

#[derive(Debug, Error)]
pub enum SlrError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error(transparent)]
    Bound(#[from] BoundError),
    #[error("worker pool: {0}")]
    Pool(String),
}

/// Raised by [`stepsize_update`] when the relaxed constraints are met.
#[derive(Debug, Error, PartialEq)]
#[error("relaxed constraints satisfied")]
pub struct ConstraintsSatisfied;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlrConfig {
    /// Contraction parameter `M > 1` of the stepsize rule.
    pub m: f64,
    /// Exponent parameter `0 < rho < 1` of the stepsize rule.
    pub rho: f64,
    /// Fraction of the initial gap estimate used for the first step.
    pub alpha: f64,
    /// Record exact dual values (and refresh the feasible cost) every this
    /// many iterations.
    pub exact_dual_every: usize,
    pub quality_tol: f64,
    pub max_iters: usize,
    pub max_seconds: f64,
    pub worker_count: usize,
    /// Keep every full iterate in the result, not only scalar records.
    pub retain_iterates: bool,
    /// Commitment repair retries with extra units after a failed dispatch.
    pub recovery_retries: usize,
}

impl Default for SlrConfig {
    fn default() -> Self {
        SlrConfig {
            m: 20.0,
            rho: 0.5,
            alpha: 0.1,
            exact_dual_every: 1,
            quality_tol: 1e-3,
            max_iters: 5000,
            max_seconds: 900.0,
            worker_count: std::thread::available_parallelism().map_or(1, |n| n.get()),
            retain_iterates: false,
            recovery_retries: 3,
        }
    }
}

impl SlrConfig {
    pub fn validate(&self) -> Result<(), SlrError> {
        let bad = |m: &str| Err(SlrError::Config(m.to_string()));
        if !(self.m > 1.0) {
            return bad("M must exceed 1");
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad("rho must lie in (0, 1)");
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(self.quality_tol > 0.0) {
            return bad("quality tolerance must be positive");
        }
        if self.exact_dual_every == 0 {
            return bad("exact dual cadence must be at least 1");
        }
        if self.worker_count == 0 {
            return bad("worker count must be at least 1");
        }
        if !(self.max_seconds >= 0.0) {
            return bad("time limit must be non-negative");
        }
        Ok(())
    }
}

/// Merit-order price of every hour: the energy cost of the unit that
/// completes a stack covering the demand. Nodal cases use the system price
/// at every bus.
pub fn init_multipliers(case: &CaseData) -> Multipliers {
    let order = merit_order(case);
    let cheapest = order.first().map_or(0.0, |&i| case.units[i].energy_cost);
    let dearest = case.units.iter().map(|u| u.energy_cost).fold(cheapest, f64::max);
    let prices: Vec<f64> = (0..case.horizon)
        .map(|t| {
            let demand = case.total_demand(t);
            if demand <= 0.0 {
                return cheapest;
            }
            let mut stack = 0.0;
            for &i in &order {
                stack += case.units[i].p_max;
                if stack >= demand {
                    return case.units[i].energy_cost;
                }
            }
            dearest
        })
        .collect();
    let rows = case.balance_rows();
    let values = (0..rows).flat_map(|_| prices.iter().copied()).collect();
    Multipliers::new(case, values).expect("dimensions follow the case")
}

/// Next stepsize: `(1 - 1/(M k^(1 - k^-rho))) s_prev |g_prev| / |g_cur|`.
pub fn stepsize_update(
    s_prev: f64,
    g_norm_prev: f64,
    g_norm_cur: f64,
    k: usize,
    m: f64,
    rho: f64,
) -> Result<f64, ConstraintsSatisfied> {
    if g_norm_cur == 0.0 {
        return Err(ConstraintsSatisfied);
    }
    let k = k.max(1) as f64;
    let p = 1.0 - 1.0 / k.powf(rho);
    let factor = 1.0 - 1.0 / (m * k.powf(p));
    Ok(factor * s_prev * g_norm_prev / g_norm_cur)
}

/// `lambda + s g`, entrywise.
pub fn update_multipliers(lambda: &Multipliers, s: f64, g: &[f64]) -> Multipliers {
    lambda.stepped(s, g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Quality measure reached the tolerance.
    QualityReached,
    /// The relaxed solution satisfied every balance constraint.
    ConstraintsSatisfied,
    IterationLimit,
    TimeLimit,
}

impl Termination {
    pub fn met_tolerance(self) -> bool {
        matches!(self, Termination::QualityReached | Termination::ConstraintsSatisfied)
    }
}

/// Scalar summary of one iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub k: usize,
    pub stepsize: f64,
    pub g_norm: f64,
    pub l_tilde: f64,
    pub q_exact: Option<f64>,
    pub q_best: f64,
    pub qbar_best: f64,
    pub feasible_cost: f64,
    pub quality: f64,
    pub duality_gap: f64,
    pub window_event: Option<WindowEvent>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total: f64,
    pub subproblems: f64,
    pub bound: f64,
    pub recovery: f64,
}

impl Timings {
    pub fn bound_share(&self) -> f64 {
        share(self.bound, self.total)
    }

    pub fn recovery_share(&self) -> f64 {
        share(self.recovery, self.total)
    }
}

fn share(part: f64, total: f64) -> f64 {
    if total > 0.0 {
        part / total
    } else {
        0.0
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    /// Multipliers with the best exact dual value.
    pub prices: Multipliers,
    pub ledger: BoundsLedger,
    pub history: Vec<IterateRecord>,
    /// Iterate at which the best dual value was attained.
    pub best_iterate: Option<SurrogateIterate>,
    pub last_iterate: Option<SurrogateIterate>,
    /// Every iterate, when requested in the configuration.
    pub iterates: Vec<SurrogateIterate>,
    pub feasible: Option<FeasibleSolution>,
    pub termination: Termination,
    pub timings: Timings,
}

impl ResultBundle {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

struct Relaxed {
    schedules: Vec<UnitSchedule>,
    flows: Option<FlowState>,
}

/// Subproblem solutions at `lambda`, improving on `prev` unit by unit.
fn solve_relaxed(case: &CaseData, lambda: &Multipliers, prev: Option<&Relaxed>) -> Result<Relaxed, SlrError> {
    use rayon::prelude::*;
    let schedules: Vec<UnitSchedule> = (0..case.units.len())
        .into_par_iter()
        .map(|i| {
            let prices = lambda.row(case.unit_row(i));
            match prev {
                Some(p) => unit::improve(&case.units[i], prices, &p.schedules[i]).0,
                None => unit::best_response(&case.units[i], prices).0,
            }
        })
        .collect();
    let flows = match case.network() {
        None => None,
        Some(net) => {
            let slices: Vec<_> = (0..case.horizon)
                .into_par_iter()
                .map(|t| network::flow_best_response(net, &lambda.column(t)))
                .collect::<Result<_, _>>()
                .map_err(DualError::from)?;
            let mut state = FlowState::default();
            for s in slices {
                state.theta.push(s.theta);
                state.f.push(s.f);
            }
            Some(state)
        }
    };
    Ok(Relaxed { schedules, flows })
}

fn commitment_key(schedules: &[UnitSchedule]) -> Vec<bool> {
    schedules.iter().flat_map(|s| s.x.iter().copied()).collect()
}

/// Run the surrogate method from merit-order prices until the quality
/// measure reaches the tolerance or a limit is hit.
pub fn run(case: &CaseData, config: &SlrConfig) -> Result<ResultBundle, SlrError> {
    run_from(case, config, init_multipliers(case))
}

/// [`run`] from given starting multipliers.
pub fn run_from(case: &CaseData, config: &SlrConfig, start: Multipliers) -> Result<ResultBundle, SlrError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_count)
        .build()
        .map_err(|e| SlrError::Pool(e.to_string()))?;
    pool.install(|| run_inner(case, config, start))
}

fn run_inner(case: &CaseData, config: &SlrConfig, start: Multipliers) -> Result<ResultBundle, SlrError> {
    let started = Instant::now();
    let mut timings = Timings::default();
    let mut ledger = BoundsLedger::default();
    let mut lambda = start;
    let mut bundle = ResultBundle {
        prices: lambda.clone(),
        ledger: ledger.clone(),
        history: Vec::new(),
        best_iterate: None,
        last_iterate: None,
        iterates: Vec::new(),
        feasible: None,
        termination: Termination::IterationLimit,
        timings,
    };
    if config.max_iters == 0 {
        bundle.timings.total = started.elapsed().as_secs_f64();
        return Ok(bundle);
    }

    let mut recovery_cache: HashMap<Vec<bool>, Option<f64>> = HashMap::new();
    let mut best_feasible: Option<FeasibleSolution> = None;
    let mut window = DivergenceWindow::new(0, lambda.as_slice());
    let mut terms: Vec<StepTerm> = Vec::new();
    let mut prev: Option<Relaxed> = None;
    let mut prev_g_norm = 0.0;
    let mut stepsize = 0.0;
    let mut best_iterate: Option<SurrogateIterate> = None;
    let mut last_iterate: Option<SurrogateIterate> = None;
    let mut termination = Termination::IterationLimit;
    let mut history = Vec::new();
    let mut iterates = Vec::new();

    for k in 0..config.max_iters {
        let t0 = Instant::now();
        let relaxed = solve_relaxed(case, &lambda, prev.as_ref())?;
        let l_tilde = dual::lagrangian(case, &lambda, &relaxed.schedules, relaxed.flows.as_ref())?;
        if let Some(p) = &prev {
            // Every unit is minimized exactly, so a missing decrease means
            // the previous solution is also optimal at these prices.
            let l_prev = dual::lagrangian(case, &lambda, &p.schedules, p.flows.as_ref())?;
            if !dual::surrogate_condition_holds(l_tilde, l_prev) {
                log::trace!("iteration {k}: surrogate condition not met, exact dual value recorded");
            }
        }
        let g = dual::violation(case, &relaxed.schedules, relaxed.flows.as_ref())?;
        let g_norm = norm(&g);
        timings.subproblems += t0.elapsed().as_secs_f64();

        let exact_event = k % config.exact_dual_every == 0;
        let q_exact = exact_event.then_some(l_tilde);
        let mut feasible_cost = None;
        if exact_event {
            let t1 = Instant::now();
            let key = commitment_key(&relaxed.schedules);
            let cached = recovery_cache.get(&key).copied();
            feasible_cost = match cached {
                Some(c) => c,
                None => {
                    let c = match recovery::recover(case, &relaxed.schedules, config.recovery_retries) {
                        Ok(sol) => {
                            let cost = sol.cost;
                            if best_feasible.as_ref().map_or(true, |b| cost < b.cost) {
                                best_feasible = Some(sol);
                            }
                            Some(cost)
                        }
                        Err(e) => {
                            log::debug!("iteration {k}: no feasible cost ({e})");
                            None
                        }
                    };
                    recovery_cache.insert(key, c);
                    c
                }
            };
            timings.recovery += t1.elapsed().as_secs_f64();
        }
        let improved_q = q_exact.map_or(false, |q| q > ledger.q_best);
        ledger.update(q_exact, None, feasible_cost);

        let converged = g_norm == 0.0;
        if converged {
            // The relaxed solution is feasible, so its value is also an
            // upper bound on the dual optimum.
            ledger.update(Some(l_tilde), Some(l_tilde), Some(l_tilde));
        }

        if k == 0 {
            let gap = ledger.feasible_cost_best - l_tilde;
            let estimate = if gap.is_finite() && gap > 0.0 {
                gap
            } else {
                // No usable feasible cost yet: take a small fraction of the
                // dual value's magnitude instead.
                1e-2 * l_tilde.abs().max(1.0)
            };
            stepsize = if converged { 0.0 } else { config.alpha * estimate / (g_norm * g_norm) };
        } else if !converged {
            stepsize = stepsize_update(stepsize, prev_g_norm, g_norm, k, config.m, config.rho)
                .expect("nonzero violation");
        }

        let iterate = SurrogateIterate {
            k,
            multipliers: lambda.clone(),
            schedules: relaxed.schedules.clone(),
            flows: relaxed.flows.clone(),
            l_tilde,
            g: g.clone(),
            g_norm,
            stepsize,
            exact: true,
        };
        if improved_q || best_iterate.is_none() && q_exact.is_some() {
            best_iterate = Some(iterate.clone());
        }

        let mut event = None;
        if !converged {
            let t2 = Instant::now();
            terms.push(StepTerm { k, stepsize, g_norm, l_tilde });
            let next = update_multipliers(&lambda, stepsize, &g);
            if window.extend(next.as_slice())? == WindowStatus::Infeasible {
                let qbar = window.bound(&terms)?;
                ledger.record_window(window.anchor(), window.steps(), qbar);
                event = ledger.window_events.last().copied();
                log::debug!(
                    "iteration {k}: window {}+{} closed, bound {qbar:.6} ({} linear solves)",
                    window.anchor(),
                    window.steps(),
                    window.lp_solves()
                );
                window = window.reset();
                terms.retain(|t| t.k >= window.anchor());
            } else if k % 100 == 0 {
                log::debug!(
                    "iteration {k}: window {}+{} open, hull {} ({} linear solves, {:.3}s bound)",
                    window.anchor(),
                    window.steps(),
                    window.hull_dim(),
                    window.lp_solves(),
                    timings.bound
                );
            }
            timings.bound += t2.elapsed().as_secs_f64();
            lambda = next;
        }

        history.push(IterateRecord {
            k,
            stepsize,
            g_norm,
            l_tilde,
            q_exact,
            q_best: ledger.q_best,
            qbar_best: ledger.qbar_best,
            feasible_cost: ledger.feasible_cost_best,
            quality: ledger.quality,
            duality_gap: ledger.duality_gap,
            window_event: event,
        });
        if config.retain_iterates {
            iterates.push(iterate.clone());
        }
        last_iterate = Some(iterate);
        prev = Some(relaxed);
        prev_g_norm = g_norm;

        if converged {
            termination = Termination::ConstraintsSatisfied;
            break;
        }
        if ledger.quality <= config.quality_tol {
            termination = Termination::QualityReached;
            break;
        }
        if started.elapsed() >= Duration::from_secs_f64(config.max_seconds) {
            termination = Termination::TimeLimit;
            break;
        }
    }

    timings.total = started.elapsed().as_secs_f64();
    log::info!(
        "{} iterations, q = {:.6}, qbar = {:.6}, quality = {:.3e}, gap = {:.3e}",
        history.len(),
        ledger.q_best,
        ledger.qbar_best,
        ledger.quality,
        ledger.duality_gap
    );
    Ok(ResultBundle {
        prices: best_iterate.as_ref().map_or(lambda, |b| b.multipliers.clone()),
        ledger,
        history,
        best_iterate,
        last_iterate,
        iterates,
        feasible: best_feasible,
        termination,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case::{Mode, UnitParams};

    #[test]
    fn stepsize_examples() {
        assert!((stepsize_update(0.1, 1.0, 1.0, 1, 2.0, 0.3).unwrap() - 0.05).abs() < 1e-15);
        assert!((stepsize_update(0.1, 1.0, 1.0, 16, 2.0, 0.5).unwrap() - 0.09375).abs() < 1e-12);
        let base = stepsize_update(0.1, 1.0, 1.0, 5, 20.0, 0.5).unwrap();
        let doubled = stepsize_update(0.1, 2.0, 1.0, 5, 20.0, 0.5).unwrap();
        assert!((doubled - 2.0 * base).abs() < 1e-15);
        assert_eq!(stepsize_update(0.1, 1.0, 0.0, 5, 20.0, 0.5), Err(ConstraintsSatisfied));
    }

    fn unit(id: &str, cost: f64) -> UnitParams {
        UnitParams {
            id: id.into(),
            bus: None,
            p_min: 50.0,
            p_max: 200.0,
            ramp: 200.0,
            startup_ramp: 200.0,
            initial_ramp: 200.0,
            min_up: 1,
            min_down: 1,
            energy_cost: cost,
            startup_cost: 0.0,
            noload_cost: 0.0,
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

    #[test]
    fn initial_prices_follow_merit_order() {
        let c = system(vec![unit("1", 65.0), unit("2", 40.0)], vec![100.0, 0.0, 300.0, 500.0]);
        let l = init_multipliers(&c);
        assert_eq!(l.as_slice(), &[40.0, 40.0, 65.0, 65.0]);
    }

    #[test]
    fn update_is_entrywise() {
        let c = system(vec![unit("1", 65.0)], vec![100.0]);
        let l = Multipliers::constant(&c, 30.0);
        assert_eq!(update_multipliers(&l, 0.1, &[20.0]).as_slice(), &[32.0]);
        assert_eq!(update_multipliers(&l, 0.0, &[20.0]).as_slice(), &[30.0]);
    }

    #[test]
    fn zero_iterations_returns_initial_bundle() {
        let c = system(vec![unit("1", 65.0)], vec![100.0]);
        let cfg = SlrConfig { max_iters: 0, worker_count: 1, ..SlrConfig::default() };
        let r = run(&c, &cfg).unwrap();
        assert_eq!(r.ledger.quality, f64::INFINITY);
        assert!(r.history.is_empty());
    }

    #[test]
    fn balanced_start_terminates_immediately() {
        // Above its cost the unit runs flat out, which is exactly the demand.
        let c = system(vec![unit("1", 40.0)], vec![200.0, 200.0]);
        let cfg = SlrConfig { worker_count: 1, ..SlrConfig::default() };
        let r = run_from(&c, &cfg, Multipliers::constant(&c, 50.0)).unwrap();
        assert_eq!(r.termination, Termination::ConstraintsSatisfied);
        assert_eq!(r.iterations(), 1);
        assert_eq!(r.ledger.quality, 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        let bad = SlrConfig { m: 1.0, ..SlrConfig::default() };
        assert!(bad.validate().is_err());
        let bad = SlrConfig { rho: 1.0, ..SlrConfig::default() };
        assert!(bad.validate().is_err());
    }
}
