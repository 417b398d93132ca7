//! Upper bounds on the optimal dual value from multiplier divergence, and the
//! ledger that tracks both bounds and the feasible cost.
//!
//! Each multiplier step `lambda^j -> lambda^{j+1}` defines the halfspace of
//! points that the step moved closer to:
//! `|lambda - lambda^{j+1}|^2 <= |lambda - lambda^j|^2`, which expands to the
//! linear row `2 (lambda^j - lambda^{j+1}) . lambda <= |lambda^j|^2 - |lambda^{j+1}|^2`.
//! Once the rows of a window of consecutive steps have no common point, no
//! optimal multiplier can satisfy all of them, so at least one step in the
//! window overshot. An overshooting step bounds the optimal dual value by
//! `s |g|^2 + L`, and the largest such value over the window bounds it for
//! certain.
//!
//! Rows are expressed relative to the window's first iterate and projected
//! onto the affine hull of the window iterates, which every row normal lies
//! in; feasibility there is equivalent to feasibility in the full space.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, IncrementalLp, LpError};

#[derive(Debug, Error, PartialEq)]
pub enum BoundError {
    #[error("window is already infeasible")]
    Closed,
    #[error("window is still open")]
    Open,
    #[error("iterate has {got} entries, window expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("no history record for iteration {0}")]
    MissingHistory(usize),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowStatus {
    Open,
    Infeasible,
}

/// The row `a . lambda <= b` of the step `prev -> next`.
pub fn divergence_row(prev: &[f64], next: &[f64]) -> (Vec<f64>, f64) {
    let a = prev.iter().zip(next).map(|(p, n)| 2.0 * (p - n)).collect();
    (a, dot(prev, prev) - dot(next, next))
}

/// Scalar summary of one iteration, enough to evaluate its bound candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepTerm {
    pub k: usize,
    pub stepsize: f64,
    pub g_norm: f64,
    pub l_tilde: f64,
}

impl StepTerm {
    pub fn candidate(&self) -> f64 {
        self.stepsize * self.g_norm * self.g_norm + self.l_tilde
    }
}

/// Relative size below which a step is treated as lying in the current hull.
const HULL_TOL: f64 = 1e-12;

/// Residual fraction below which a step is orthogonalized a second time.
const REORTHOGONALIZE: f64 = 0.7;

/// Smallest component a row needs along the direction it introduces to serve
/// as that direction's pivot.
const PIVOT_MIN: f64 = 1e-6;

/// Consecutive multiplier iterates since the last reset and the linear
/// system they define.
///
/// A row that introduces a new hull direction is the only row touching that
/// direction, so its slack can stand in for the coordinate: the pivot rows
/// form a triangular system whose slacks are free of each other. The linear
/// program then only carries the rows that introduced no direction, over one
/// variable per direction (the pivot's slack excess over the common slack `t`,
/// or the coordinate itself when there is no pivot) plus `t`, and maximizes
/// `t` up to a cap. Rows and variables are added to one warm-started program
/// for the whole window.
#[derive(Debug, Clone)]
pub struct DivergenceWindow {
    anchor: usize,
    dim: usize,
    /// Most recent iterate.
    last: Vec<f64>,
    /// Number of iterates in the window.
    count: usize,
    /// Orthonormal basis of the span of the window's steps.
    basis: Vec<Vec<f64>>,
    /// Coordinates of the most recent iterate, relative to the first one.
    last_coords: Vec<f64>,
    /// Unit-normalized rows `a . z <= b` in basis coordinates (rows shorter
    /// than the basis have trailing zeros).
    rows: Vec<(Vec<f64>, f64)>,
    /// Pivot row of each hull direction, when the row that introduced it
    /// has a large enough component there.
    pivots: Vec<Option<usize>>,
    /// Variable 0 is `t`, variable `c + 1` belongs to direction `c`.
    lp: IncrementalLp,
    max_rhs: f64,
    status: WindowStatus,
    lp_solves: usize,
}

/// Dot product with independent partial sums, which the compiler can keep
/// in vector registers.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn padded(v: &[f64], n: usize) -> Vec<f64> {
    let mut out = v.to_vec();
    out.resize(n, 0.0);
    out
}

impl DivergenceWindow {
    /// A window holding the single iterate `lambda` produced at iteration
    /// `anchor`.
    pub fn new(anchor: usize, lambda: &[f64]) -> Self {
        DivergenceWindow {
            anchor,
            dim: lambda.len(),
            last: lambda.to_vec(),
            count: 1,
            basis: Vec::new(),
            last_coords: Vec::new(),
            rows: Vec::new(),
            pivots: Vec::new(),
            lp: IncrementalLp::new(),
            max_rhs: 1.0,
            status: WindowStatus::Open,
            lp_solves: 0,
        }
    }

    pub fn anchor(&self) -> usize {
        self.anchor
    }

    /// Number of steps (rows) in the window.
    pub fn steps(&self) -> usize {
        self.count - 1
    }

    pub fn status(&self) -> WindowStatus {
        self.status
    }

    pub fn last(&self) -> &[f64] {
        &self.last
    }

    /// Dimension of the affine hull spanned so far.
    pub fn hull_dim(&self) -> usize {
        self.basis.len()
    }

    /// Number of times the linear program had to be re-solved.
    pub fn lp_solves(&self) -> usize {
        self.lp_solves
    }

    /// Unit-normalized rows in hull coordinates relative to the first iterate.
    pub fn rows(&self) -> &[(Vec<f64>, f64)] {
        &self.rows
    }

    /// Coordinates of the step `delta` in the basis, growing the basis when
    /// the step leaves the current span. Classical Gram-Schmidt with a
    /// second pass before a new direction is accepted.
    /// One modified Gram-Schmidt sweep: removes the basis components of `r`
    /// and returns them. Each basis vector is read once, while it is cached.
    fn project_out(&self, r: &mut [f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|q| {
                let c = dot(q, r);
                axpy(r, -c, q);
                c
            })
            .collect()
    }

    fn step_coordinates(&mut self, delta: &[f64]) -> Vec<f64> {
        let norm = dot(delta, delta).sqrt();
        let reference = norm.max(self.last.iter().fold(1.0, |m, v| m.max(v.abs())));
        let mut r = delta.to_vec();
        let mut c = self.project_out(&mut r);
        let mut rest = dot(&r, &r).sqrt();
        if rest <= HULL_TOL * reference {
            return c;
        }
        if rest < REORTHOGONALIZE * norm {
            // Cancellation lost digits: a second pass restores orthogonality.
            let c2 = self.project_out(&mut r);
            c.iter_mut().zip(&c2).for_each(|(c1, c2)| *c1 += c2);
            rest = dot(&r, &r).sqrt();
            if rest <= HULL_TOL * reference {
                return c;
            }
        }
        r.iter_mut().for_each(|v| *v /= rest);
        self.basis.push(r);
        c.push(rest);
        c
    }

    /// Append an iterate and the row of the step that produced it, and
    /// decide whether the system is still feasible.
    pub fn extend(&mut self, lambda: &[f64]) -> Result<WindowStatus, BoundError> {
        if self.status == WindowStatus::Infeasible {
            return Err(BoundError::Closed);
        }
        if lambda.len() != self.dim {
            return Err(BoundError::Dimension {
                expected: self.dim,
                got: lambda.len(),
            });
        }
        let delta: Vec<f64> = lambda.iter().zip(&self.last).map(|(n, o)| n - o).collect();
        let m_old = self.basis.len();
        let step = self.step_coordinates(&delta);
        let m = self.basis.len();
        let w_old = padded(&self.last_coords, m);
        let w_new: Vec<f64> = w_old.iter().zip(&step).map(|(o, s)| o + s).collect();
        let a: Vec<f64> = step.iter().map(|s| -2.0 * s).collect();
        let b = dot(&w_old, &w_old) - dot(&w_new, &w_new);
        self.last = lambda.to_vec();
        self.last_coords = w_new;
        self.count += 1;

        let norm = dot(&a, &a).sqrt();
        if norm == 0.0 {
            return Ok(self.status);
        }
        let a: Vec<f64> = a.iter().map(|v| v / norm).collect();
        let b = b / norm;
        let cap = norm / 2.0;
        self.max_rhs = self.max_rhs.max(b.abs());
        if self.lp.vars() == 0 {
            self.lp.add_var(-1.0, f64::NEG_INFINITY, cap)?;
        }
        let j = self.rows.len();
        let pivot = m > m_old && a[m - 1].abs() >= PIVOT_MIN;
        self.rows.push((a, b));
        if m > m_old {
            self.pivots.push(pivot.then_some(j));
            let lo = if pivot { 0.0 } else { f64::NEG_INFINITY };
            self.lp.add_var(0.0, lo, f64::INFINITY)?;
        }
        if pivot {
            // Its slack is a free variable of the program; nothing to check.
            return Ok(self.status);
        }

        let (coef, rhs) = self.reduce(j);
        let x = self.lp.values();
        let excess = dot(&coef, &x) - rhs;
        self.lp.add_row(&coef, rhs)?;
        let tol = self.tol();
        if excess <= tol {
            return Ok(self.status);
        }
        self.lp_solves += 1;
        self.lp.set_upper(0, cap);
        if !self.lp.solve(tol)? || self.lp.value(0) < -tol {
            self.status = WindowStatus::Infeasible;
        }
        Ok(self.status)
    }

    /// Row `j` over the program's variables, with the left-hand side
    /// including `t` so the program maximizes the common slack.
    fn reduce(&self, j: usize) -> (Vec<f64>, f64) {
        let (a, b) = &self.rows[j];
        let mut y = a.clone();
        let mut coef = vec![0.0; y.len() + 1];
        let mut constant = 0.0;
        for c in (0..y.len()).rev() {
            let yc = y[c];
            if yc == 0.0 {
                continue;
            }
            match self.pivots[c] {
                Some(p) => {
                    // z_c = (b_p - t - s_c - sum_{i<c} a_p[i] z_i) / a_p[c]
                    let (ap, bp) = &self.rows[p];
                    let r = yc / ap[c];
                    constant += r * bp;
                    coef[c + 1] -= r;
                    coef[0] -= r;
                    axpy(&mut y[..c], -r, &ap[..c]);
                }
                None => coef[c + 1] += yc,
            }
        }
        coef[0] += 1.0;
        (coef, b - constant)
    }

    fn tol(&self) -> f64 {
        lp::FEAS_TOL * self.max_rhs
    }

    /// Upper bound from an infeasible window: the largest `s |g|^2 + L`
    /// over the iterations whose steps built the window's rows.
    pub fn bound(&self, history: &[StepTerm]) -> Result<f64, BoundError> {
        if self.status != WindowStatus::Infeasible {
            return Err(BoundError::Open);
        }
        let mut best = f64::NEG_INFINITY;
        for kappa in self.anchor..self.anchor + self.steps() {
            let term = history
                .iter()
                .rev()
                .find(|t| t.k == kappa)
                .ok_or(BoundError::MissingHistory(kappa))?;
            best = best.max(term.candidate());
        }
        Ok(best)
    }

    /// Start a new window at the last iterate of this one.
    pub fn reset(&self) -> DivergenceWindow {
        DivergenceWindow::new(self.anchor + self.steps(), &self.last)
    }
}

/// A window that became infeasible and the bound it produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowEvent {
    pub anchor: usize,
    pub length: usize,
    pub qbar: f64,
    pub accepted: bool,
}

/// Best bounds, feasible cost and the derived quality figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsLedger {
    pub q_best: f64,
    pub qbar_best: f64,
    pub feasible_cost_best: f64,
    pub quality: f64,
    pub duality_gap: f64,
    pub window_events: Vec<WindowEvent>,
}

impl Default for BoundsLedger {
    fn default() -> Self {
        BoundsLedger {
            q_best: f64::NEG_INFINITY,
            qbar_best: f64::INFINITY,
            feasible_cost_best: f64::INFINITY,
            quality: f64::INFINITY,
            duality_gap: f64::INFINITY,
            window_events: Vec::new(),
        }
    }
}

/// Outcome of offering an upper-bound candidate to the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundVerdict {
    Improved,
    NotBetter,
    /// Below the best lower bound; the candidate cannot be a valid bound.
    Rejected,
}

fn relative(upper: f64, lower: f64) -> f64 {
    if upper.is_finite() && lower.is_finite() {
        (upper - lower) / upper
    } else {
        f64::INFINITY
    }
}

impl BoundsLedger {
    /// Offer new candidates. Returns the verdict on the upper bound
    /// candidate, if one was given.
    pub fn update(&mut self, q: Option<f64>, qbar: Option<f64>, feasible_cost: Option<f64>) -> Option<BoundVerdict> {
        if let Some(q) = q {
            self.q_best = self.q_best.max(q);
        }
        if let Some(c) = feasible_cost {
            self.feasible_cost_best = self.feasible_cost_best.min(c);
        }
        let verdict = qbar.map(|qb| {
            if qb < self.q_best {
                log::warn!("upper bound candidate {qb} lies below the best dual value {}; rejected", self.q_best);
                BoundVerdict::Rejected
            } else if qb < self.qbar_best {
                self.qbar_best = qb;
                BoundVerdict::Improved
            } else {
                BoundVerdict::NotBetter
            }
        });
        self.quality = relative(self.qbar_best, self.q_best);
        self.duality_gap = relative(self.feasible_cost_best, self.q_best);
        verdict
    }

    /// Offer the bound of a closed window and log the event.
    pub fn record_window(&mut self, anchor: usize, length: usize, qbar: f64) -> BoundVerdict {
        let verdict = self.update(None, Some(qbar), None).expect("candidate given");
        self.window_events.push(WindowEvent {
            anchor,
            length,
            qbar,
            accepted: verdict != BoundVerdict::Rejected,
        });
        verdict
    }

    pub fn rejections(&self) -> usize {
        self.window_events.iter().filter(|e| !e.accepted).count()
    }
}
