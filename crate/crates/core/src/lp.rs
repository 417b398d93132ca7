//! Dense bounded-variable primal simplex.
//!
//! Every variable (structural, slack or artificial) carries its own
//! `[lo, hi]` interval, so box constraints never become tableau rows. Phase 1
//! minimizes the sum of artificial variables added only for rows whose slack
//! cannot absorb the initial residual; phase 2 optimizes the real objective.
//! Pricing is Dantzig's rule until a run of degenerate pivots trips the
//! counter, after which Bland's rule guarantees termination.

use thiserror::Error;

/// Primal feasibility tolerance (scaled by the magnitude of the right-hand side).
pub const FEAS_TOL: f64 = 1e-9;
/// Reduced-cost optimality tolerance.
pub const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-10;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self { coeffs, relation, rhs }
    }
}

/// `min objective·x` subject to the rows and per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// `(lo, hi)` per variable; infinities allowed.
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    /// A program over `n` variables with bounds `[0, +inf)` and no rows.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self {
            objective,
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); n],
        }
    }

    pub fn with_bounds(mut self, bounds: Vec<(f64, f64)>) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn push(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.objective.len();
        if self.bounds.len() != n {
            return Err(LpError::Dimension(format!(
                "{} bounds for {} variables",
                self.bounds.len(),
                n
            )));
        }
        for (i, c) in self.constraints.iter().enumerate() {
            if c.coeffs.len() != n {
                return Err(LpError::Dimension(format!(
                    "row {i} has {} coefficients for {n} variables",
                    c.coeffs.len()
                )));
            }
            if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
                return Err(LpError::NotFinite(format!("row {i}")));
            }
        }
        if self.objective.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NotFinite("objective".into()));
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY
            {
                return Err(LpError::Bounds(j));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOutcome {
    pub status: LpStatus,
    /// Primal point; meaningful only when optimal.
    pub x: Vec<f64>,
    pub objective: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite data in {0}")]
    NotFinite(String),
    #[error("variable {0} has an empty or invalid bound interval")]
    Bounds(usize),
    #[error("simplex stalled after {0} pivots")]
    Stalled(usize),
}

/// Solve a linear program to an optimal basic solution.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpOutcome, LpError> {
    lp.check()?;
    let n = lp.objective.len();
    let mut tab = Tableau::build(lp);
    if !tab.phase_one()? {
        return Ok(LpOutcome {
            status: LpStatus::Infeasible,
            x: tab.structural(n),
            objective: f64::NAN,
        });
    }
    let mut cost = vec![0.0; tab.ncols];
    cost[..n].copy_from_slice(&lp.objective);
    if !tab.optimize(&cost)? {
        return Ok(LpOutcome {
            status: LpStatus::Unbounded,
            x: tab.structural(n),
            objective: f64::NEG_INFINITY,
        });
    }
    let x = tab.structural(n);
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpOutcome {
        status: LpStatus::Optimal,
        x,
        objective,
    })
}

/// Whether `{x : a·x <= b for every row}` is nonempty (variables are free).
pub fn feasible(rows: &[(Vec<f64>, f64)]) -> Result<bool, LpError> {
    Ok(feasible_point(rows)?.is_some())
}

/// A point satisfying every row `a·x <= b` within tolerance, if one exists.
pub fn feasible_point(rows: &[(Vec<f64>, f64)]) -> Result<Option<Vec<f64>>, LpError> {
    let n = rows.first().map_or(0, |r| r.0.len());
    let mut lp = LinearProgram::new(vec![0.0; n]).with_bounds(vec![(f64::NEG_INFINITY, f64::INFINITY); n]);
    for (a, b) in rows {
        lp.push(a.clone(), Relation::Le, *b);
    }
    lp.check()?;
    let mut tab = Tableau::build(&lp);
    if tab.phase_one()? {
        Ok(Some(tab.structural(n)))
    } else {
        Ok(None)
    }
}

const NONBASIC: usize = usize::MAX;

struct Tableau {
    m: usize,
    ncols: usize,
    /// `B^{-1} A`, row-major `m x ncols`.
    a: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    /// Current value of every column.
    x: Vec<f64>,
    basis: Vec<usize>,
    /// Row in which a column is basic, or `NONBASIC`.
    row_of: Vec<usize>,
    first_artificial: usize,
    feas_tol: f64,
    pivots: usize,
    max_pivots: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.objective.len();
        let m = lp.constraints.len();

        // Nonbasic structurals start at the bound favoured by the objective.
        let mut xs = Vec::with_capacity(n);
        for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
            let c = lp.objective[j];
            let v = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => {
                    if c < 0.0 {
                        hi
                    } else {
                        lo
                    }
                }
                (true, false) => lo,
                (false, true) => hi,
                (false, false) => 0.0,
            };
            xs.push(v);
        }

        let mut needs_art = Vec::with_capacity(m);
        let mut residual = Vec::with_capacity(m);
        for c in &lp.constraints {
            let r = c.rhs - c.coeffs.iter().zip(&xs).map(|(a, v)| a * v).sum::<f64>();
            let ok = match c.relation {
                Relation::Le => r >= 0.0,
                Relation::Ge => r <= 0.0,
                Relation::Eq => r == 0.0,
            };
            needs_art.push(!ok);
            residual.push(r);
        }
        let n_art = needs_art.iter().filter(|&&b| b).count();
        let ncols = n + m + n_art;
        let first_artificial = n + m;

        let mut a = vec![0.0; m * ncols];
        let mut lo = Vec::with_capacity(ncols);
        let mut hi = Vec::with_capacity(ncols);
        let mut x = vec![0.0; ncols];
        lo.extend(lp.bounds.iter().map(|b| b.0));
        hi.extend(lp.bounds.iter().map(|b| b.1));
        x[..n].copy_from_slice(&xs);
        for c in &lp.constraints {
            let (l, h) = match c.relation {
                Relation::Le => (0.0, f64::INFINITY),
                Relation::Ge => (f64::NEG_INFINITY, 0.0),
                Relation::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
        }
        lo.extend(std::iter::repeat_n(0.0, n_art));
        hi.extend(std::iter::repeat_n(f64::INFINITY, n_art));

        let mut basis = Vec::with_capacity(m);
        let mut row_of = vec![NONBASIC; ncols];
        let mut art = first_artificial;
        for (i, c) in lp.constraints.iter().enumerate() {
            let row = &mut a[i * ncols..(i + 1) * ncols];
            let (sign, basic) = if needs_art[i] {
                let s = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
                let col = art;
                art += 1;
                (s, col)
            } else {
                (1.0, n + i)
            };
            // Row scaled by the sign of its basic column so that B = I.
            for (dst, &v) in row[..n].iter_mut().zip(&c.coeffs) {
                *dst = sign * v;
            }
            row[n + i] = sign;
            if basic >= first_artificial {
                row[basic] = 1.0;
                x[basic] = residual[i].abs();
            } else {
                x[basic] = residual[i];
            }
            basis.push(basic);
            row_of[basic] = i;
        }

        let scale = lp
            .constraints
            .iter()
            .map(|c| c.rhs.abs())
            .fold(1.0_f64, f64::max);
        Tableau {
            m,
            ncols,
            a,
            lo,
            hi,
            x,
            basis,
            row_of,
            first_artificial,
            feas_tol: FEAS_TOL * scale,
            pivots: 0,
            max_pivots: 50 * (m + ncols).max(1),
        }
    }

    fn structural(&self, n: usize) -> Vec<f64> {
        self.x[..n].to_vec()
    }

    /// Returns whether the system is feasible. Leaves a feasible basis with
    /// every artificial fixed at zero.
    fn phase_one(&mut self) -> Result<bool, LpError> {
        if self.first_artificial < self.ncols {
            let mut cost = vec![0.0; self.ncols];
            for c in &mut cost[self.first_artificial..] {
                *c = 1.0;
            }
            let bounded = self.optimize(&cost)?;
            debug_assert!(bounded, "phase one is bounded below by zero");
            let infeasibility: f64 = self.x[self.first_artificial..].iter().sum();
            if infeasibility > self.feas_tol {
                return Ok(false);
            }
            for j in self.first_artificial..self.ncols {
                self.hi[j] = 0.0;
                if self.row_of[j] == NONBASIC {
                    self.x[j] = 0.0;
                }
            }
        }
        Ok(true)
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.a[i * self.ncols..(i + 1) * self.ncols];
                for (dj, &aij) in d.iter_mut().zip(row) {
                    *dj -= cb * aij;
                }
            }
        }
        d
    }

    /// Primal simplex on `cost`. Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64]) -> Result<bool, LpError> {
        let mut d = self.reduced_costs(cost);
        let mut degenerate = 0usize;
        let mut bland = false;
        loop {
            let Some((q, dir)) = self.choose_entering(&d, bland) else {
                return Ok(true);
            };
            self.pivots += 1;
            if self.pivots > self.max_pivots {
                return Err(LpError::Stalled(self.pivots));
            }

            // Ratio test. Basic values move by -dir * t * a[i][q].
            let mut step = match dir > 0.0 {
                true => self.hi[q] - self.x[q],
                false => self.x[q] - self.lo[q],
            };
            let mut leave: Option<(usize, bool)> = None;
            let mut best_alpha = 0.0;
            for i in 0..self.m {
                let alpha = dir * self.a[i * self.ncols + q];
                if alpha.abs() <= PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                let (limit, to_upper) = if alpha > 0.0 {
                    if self.lo[b] == f64::NEG_INFINITY {
                        continue;
                    }
                    (((self.x[b] - self.lo[b]) / alpha).max(0.0), false)
                } else {
                    if self.hi[b] == f64::INFINITY {
                        continue;
                    }
                    (((self.hi[b] - self.x[b]) / -alpha).max(0.0), true)
                };
                let better = match leave {
                    None => limit < step || (limit == step && step.is_finite()),
                    Some((r, _)) => {
                        if limit < step - 1e-12 * (1.0 + step.abs()) {
                            true
                        } else if limit <= step + 1e-12 * (1.0 + step.abs()) {
                            if bland {
                                b < self.basis[r]
                            } else {
                                alpha.abs() > best_alpha
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = if leave.is_none() { limit } else { step.min(limit) };
                    leave = Some((i, to_upper));
                    best_alpha = alpha.abs();
                }
            }
            if step == f64::INFINITY {
                return Ok(false);
            }

            if step <= 1e-12 {
                degenerate += 1;
                if degenerate > DEGENERATE_RUN {
                    bland = true;
                }
            } else {
                degenerate = 0;
            }

            // Move along the edge.
            if step > 0.0 {
                for i in 0..self.m {
                    let aiq = self.a[i * self.ncols + q];
                    if aiq != 0.0 {
                        let b = self.basis[i];
                        self.x[b] -= dir * step * aiq;
                    }
                }
                self.x[q] += dir * step;
            }

            match leave {
                None => {
                    // Bound flip of the entering variable.
                    self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                }
                Some((r, to_upper)) => {
                    let b = self.basis[r];
                    self.x[b] = if to_upper { self.hi[b] } else { self.lo[b] };
                    self.pivot(r, q, &mut d);
                }
            }
        }
    }

    fn choose_entering(&self, d: &[f64], bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        let mut best_score = 0.0;
        for j in 0..self.ncols {
            if self.row_of[j] != NONBASIC || self.lo[j] == self.hi[j] {
                continue;
            }
            let dj = d[j];
            let dir = if dj < -OPT_TOL && self.x[j] < self.hi[j] {
                1.0
            } else if dj > OPT_TOL && self.x[j] > self.lo[j] {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if dj.abs() > best_score {
                best_score = dj.abs();
                best = Some((j, dir));
            }
        }
        best
    }

    fn pivot(&mut self, r: usize, q: usize, d: &mut [f64]) {
        let nc = self.ncols;
        let piv = self.a[r * nc + q];
        {
            let row = &mut self.a[r * nc..(r + 1) * nc];
            for v in row.iter_mut() {
                *v /= piv;
            }
            row[q] = 1.0;
        }
        let nz: Vec<usize> = (0..nc).filter(|&j| self.a[r * nc + j] != 0.0).collect();
        let pivot_row: Vec<f64> = nz.iter().map(|&j| self.a[r * nc + j]).collect();
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * nc + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * nc..(i + 1) * nc];
            for (&j, &pv) in nz.iter().zip(&pivot_row) {
                row[j] -= f * pv;
            }
            row[q] = 0.0;
        }
        let dq = d[q];
        if dq != 0.0 {
            for (&j, &pv) in nz.iter().zip(&pivot_row) {
                d[j] -= dq * pv;
            }
            d[q] = 0.0;
        }
        let old = self.basis[r];
        self.row_of[old] = NONBASIC;
        self.basis[r] = q;
        self.row_of[q] = r;
    }
}

/// A minimization over bounded variables whose rows `a·x <= b` and columns
/// arrive one at a time. The basis stays dual feasible throughout, so each
/// re-solve is a warm-started bounded dual simplex that usually needs only a
/// few pivots.
#[derive(Debug, Clone, Default)]
pub struct IncrementalLp {
    /// Tableau rows `B^{-1} A`, one entry per column.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    cost: Vec<f64>,
    /// Reduced costs.
    d: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    /// Columns that are user variables (as opposed to row slacks).
    structural: Vec<usize>,
    pivots: usize,
}

impl IncrementalLp {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of user variables.
    pub fn vars(&self) -> usize {
        self.structural.len()
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    /// Total simplex pivots so far.
    pub fn pivots(&self) -> usize {
        self.pivots
    }

    fn push_column(&mut self, cost: f64, lo: f64, hi: f64, value: f64) -> usize {
        let j = self.cost.len();
        self.cost.push(cost);
        self.d.push(cost);
        self.lo.push(lo);
        self.hi.push(hi);
        self.x.push(value);
        self.row_of.push(NONBASIC);
        for row in &mut self.rows {
            row.push(0.0);
        }
        j
    }

    /// Add a variable absent from every existing row. It starts nonbasic at
    /// the bound its cost favours, which keeps the basis dual feasible.
    /// Returns the variable index.
    pub fn add_var(&mut self, cost: f64, lo: f64, hi: f64) -> Result<usize, LpError> {
        let value = match (cost, lo.is_finite(), hi.is_finite()) {
            (c, _, true) if c < 0.0 => hi,
            (c, true, _) if c > 0.0 => lo,
            (0.0, true, _) => lo,
            (0.0, false, true) => hi,
            (0.0, false, false) => 0.0,
            _ => return Err(LpError::Bounds(self.structural.len())),
        };
        let col = self.push_column(cost, lo, hi, value);
        self.structural.push(col);
        Ok(self.structural.len() - 1)
    }

    /// Add the row `coeffs·x <= rhs` over the first `coeffs.len()` variables.
    /// The current point stays basic; call `solve` to restore feasibility.
    pub fn add_row(&mut self, coeffs: &[f64], rhs: f64) -> Result<(), LpError> {
        if coeffs.len() > self.structural.len() {
            return Err(LpError::Dimension(format!(
                "row has {} coefficients for {} variables",
                coeffs.len(),
                self.structural.len()
            )));
        }
        if !rhs.is_finite() || coeffs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NotFinite("row".into()));
        }
        let slack = self.push_column(0.0, 0.0, f64::INFINITY, 0.0);
        let mut row = vec![0.0; self.cost.len()];
        for (&c, &v) in self.structural.iter().zip(coeffs) {
            row[c] = v;
        }
        row[slack] = 1.0;
        for (i, &b) in self.basis.iter().enumerate() {
            let f = row[b];
            if f != 0.0 {
                for (r, &v) in row.iter_mut().zip(&self.rows[i]) {
                    *r -= f * v;
                }
                row[b] = 0.0;
            }
        }
        let activity: f64 = self.structural.iter().zip(coeffs).map(|(&c, v)| v * self.x[c]).sum();
        self.x[slack] = rhs - activity;
        self.row_of[slack] = self.rows.len();
        self.basis.push(slack);
        self.rows.push(row);
        Ok(())
    }

    /// Change the upper bound of a variable, moving it along if it sits
    /// nonbasic at the old bound.
    pub fn set_upper(&mut self, var: usize, hi: f64) {
        let c = self.structural[var];
        let old = self.hi[c];
        self.hi[c] = hi;
        if self.row_of[c] == NONBASIC && self.x[c] == old {
            let delta = hi - old;
            for (row, &b) in self.rows.iter().zip(&self.basis) {
                self.x[b] -= row[c] * delta;
            }
            self.x[c] = hi;
        }
    }

    /// Current value of a variable.
    pub fn value(&self, var: usize) -> f64 {
        self.x[self.structural[var]]
    }

    pub fn values(&self) -> Vec<f64> {
        self.structural.iter().map(|&c| self.x[c]).collect()
    }

    /// Bounded dual simplex to a primal feasible, hence optimal, basis.
    /// Returns false when the rows admit no point within the bounds.
    pub fn solve(&mut self, tol: f64) -> Result<bool, LpError> {
        let limit = self.pivots + 50 * (self.rows.len() + self.cost.len()).max(1);
        loop {
            // Leaving row: the basic variable furthest outside its bounds.
            let mut leave: Option<(usize, f64)> = None;
            let mut worst = tol;
            for (i, &b) in self.basis.iter().enumerate() {
                let v = self.x[b];
                let (excess, target) = if v < self.lo[b] - worst {
                    (self.lo[b] - v, self.lo[b])
                } else if v > self.hi[b] + worst {
                    (v - self.hi[b], self.hi[b])
                } else {
                    continue;
                };
                worst = excess;
                leave = Some((i, target));
            }
            let Some((r, target)) = leave else {
                return Ok(true);
            };
            self.pivots += 1;
            if self.pivots > limit {
                return Err(LpError::Stalled(self.pivots));
            }
            let b = self.basis[r];
            // Raising the basic value needs sign(a_rj * dx_j) < 0.
            let up = target > self.x[b];
            let row = &self.rows[r];
            let mut enter: Option<usize> = None;
            let mut best_ratio = f64::INFINITY;
            let mut best_alpha = 0.0;
            for j in 0..self.cost.len() {
                if self.row_of[j] != NONBASIC || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = row[j];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let can_rise = self.x[j] < self.hi[j];
                let can_fall = self.x[j] > self.lo[j];
                // Direction x_j must move in to push x_b towards the target.
                let rise = (a < 0.0) == up;
                if (rise && !can_rise) || (!rise && !can_fall) {
                    continue;
                }
                let ratio = (self.d[j] / a).abs();
                if ratio < best_ratio - 1e-12 || (ratio <= best_ratio + 1e-12 && a.abs() > best_alpha) {
                    best_ratio = ratio;
                    best_alpha = a.abs();
                    enter = Some(j);
                }
            }
            let Some(q) = enter else {
                return Ok(false);
            };
            let step = (self.x[b] - target) / self.rows[r][q];
            for (row, &bi) in self.rows.iter().zip(&self.basis) {
                let a = row[q];
                if a != 0.0 {
                    self.x[bi] -= a * step;
                }
            }
            self.x[q] += step;
            self.x[b] = target;
            self.pivot(r, q);
        }
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let piv = self.rows[r][q];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        self.rows[r][q] = 1.0;
        let nz: Vec<usize> = (0..self.cost.len()).filter(|&j| self.rows[r][j] != 0.0).collect();
        let prow: Vec<f64> = nz.iter().map(|&j| self.rows[r][j]).collect();
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.rows[i];
            for (&j, &pv) in nz.iter().zip(&prow) {
                row[j] -= f * pv;
            }
            row[q] = 0.0;
        }
        let dq = self.d[q];
        if dq != 0.0 {
            for (&j, &pv) in nz.iter().zip(&prow) {
                self.d[j] -= dq * pv;
            }
            self.d[q] = 0.0;
        }
        let old = self.basis[r];
        self.row_of[old] = NONBASIC;
        self.basis[r] = q;
        self.row_of[q] = r;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(objective: Vec<f64>, bounds: Vec<(f64, f64)>) -> LinearProgram {
        LinearProgram::new(objective).with_bounds(bounds)
    }

    #[test]
    fn single_variable_box() {
        let mut p = lp(vec![1.0], vec![(f64::NEG_INFINITY, f64::INFINITY)]);
        p.push(vec![1.0], Relation::Ge, 3.0);
        p.push(vec![1.0], Relation::Le, 10.0);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.x[0] - 3.0).abs() < 1e-12);
        assert!((out.objective - 3.0).abs() < 1e-12);
    }

    #[test]
    fn empty_box_is_infeasible() {
        let mut p = lp(vec![0.0], vec![(f64::NEG_INFINITY, f64::INFINITY)]);
        p.push(vec![1.0], Relation::Le, 1.0);
        p.push(vec![1.0], Relation::Ge, 2.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Infeasible);
    }

    #[test]
    fn triangle_vertex_enumeration() {
        // Vertices of {x + y <= 1, x, y in [0, 1]}: (0,0), (1,0), (0,1).
        let vertices = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)];
        let oracle = vertices
            .iter()
            .map(|(x, y)| -x - y)
            .fold(f64::INFINITY, f64::min);
        let mut p = lp(vec![-1.0, -1.0], vec![(0.0, 1.0), (0.0, 1.0)]);
        p.push(vec![1.0, 1.0], Relation::Le, 1.0);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective - oracle).abs() < 1e-12);
        assert_eq!(oracle, -1.0);
    }

    #[test]
    fn unbounded_ray() {
        let mut p = lp(vec![-1.0, 0.0], vec![(0.0, f64::INFINITY), (0.0, 1.0)]);
        p.push(vec![1.0, -1.0], Relation::Ge, 0.0);
        assert_eq!(solve_lp(&p).unwrap().status, LpStatus::Unbounded);
    }

    #[test]
    fn equality_rows_and_free_variables() {
        // min x + 2y + 3z, x + y + z = 6, x - y = 1, z >= 1, y free.
        let inf = f64::INFINITY;
        let mut p = lp(
            vec![1.0, 2.0, 3.0],
            vec![(0.0, inf), (-inf, inf), (1.0, inf)],
        );
        p.push(vec![1.0, 1.0, 1.0], Relation::Eq, 6.0);
        p.push(vec![1.0, -1.0, 0.0], Relation::Eq, 1.0);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        // z = 1, x = 3, y = 2 -> 3 + 4 + 3 = 10
        assert!((out.objective - 10.0).abs() < 1e-9, "{out:?}");
    }

    #[test]
    fn rejects_bad_dimensions() {
        let mut p = lp(vec![1.0, 1.0], vec![(0.0, 1.0); 2]);
        p.push(vec![1.0], Relation::Le, 1.0);
        assert!(matches!(solve_lp(&p), Err(LpError::Dimension(_))));
        let q = lp(vec![1.0], vec![(2.0, 1.0)]);
        assert_eq!(solve_lp(&q), Err(LpError::Bounds(0)));
    }

    #[test]
    fn feasibility_examples() {
        assert!(feasible(&[(vec![-2.0], -1.0), (vec![1.0], 0.75)]).unwrap());
        assert!(!feasible(&[(vec![-2.0], -1.0), (vec![4.0], 0.0)]).unwrap());
        assert!(feasible(&[]).unwrap());
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's classic cycling instance (as a minimization).
        let mut p = lp(vec![-0.75, 150.0, -0.02, 6.0], vec![(0.0, f64::INFINITY); 4]);
        p.push(vec![0.25, -60.0, -0.04, 9.0], Relation::Le, 0.0);
        p.push(vec![0.5, -90.0, -0.02, 3.0], Relation::Le, 0.0);
        p.push(vec![0.0, 0.0, 1.0, 0.0], Relation::Le, 1.0);
        let out = solve_lp(&p).unwrap();
        assert_eq!(out.status, LpStatus::Optimal);
        assert!((out.objective + 0.05).abs() < 1e-9, "{out:?}");
    }

    fn incremental_matches(rows: &[(Vec<f64>, f64)], cost: &[f64], bound: f64) {
        let mut inc = IncrementalLp::new();
        for &c in cost {
            inc.add_var(c, -bound, bound).unwrap();
        }
        let mut batch = lp(cost.to_vec(), vec![(-bound, bound); cost.len()]);
        for (n, (a, b)) in rows.iter().enumerate() {
            inc.add_row(a, *b).unwrap();
            let mut full = a.clone();
            full.resize(cost.len(), 0.0);
            batch.push(full, Relation::Le, *b);
            let ok = inc.solve(1e-9).unwrap();
            let out = solve_lp(&batch).unwrap();
            assert_eq!(ok, out.status == LpStatus::Optimal, "after {} rows", n + 1);
            if !ok {
                return;
            }
            let x = inc.values();
            let obj: f64 = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
            assert!((obj - out.objective).abs() <= 1e-7 * obj.abs().max(1.0), "{obj} vs {}", out.objective);
            for (a, b) in &rows[..=n] {
                let lhs: f64 = a.iter().zip(&x).map(|(a, v)| a * v).sum();
                assert!(lhs <= b + 1e-7);
            }
        }
    }

    #[test]
    fn incremental_rows_match_batch_solves() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..300 {
            let n = rng.gen_range(1..=5);
            let cost: Vec<f64> = (0..n).map(|_| rng.gen_range(-3i32..=3) as f64).collect();
            let rows: Vec<(Vec<f64>, f64)> = (0..rng.gen_range(1..=8))
                .map(|_| {
                    let a = (0..rng.gen_range(1..=n)).map(|_| rng.gen_range(-4i32..=4) as f64).collect();
                    (a, rng.gen_range(-6i32..=6) as f64)
                })
                .collect();
            incremental_matches(&rows, &cost, 5.0);
        }
    }

    #[test]
    fn raising_an_upper_bound_moves_the_optimum() {
        let mut inc = IncrementalLp::new();
        inc.add_var(-1.0, f64::NEG_INFINITY, 1.0).unwrap();
        inc.add_var(0.0, 0.0, f64::INFINITY).unwrap();
        inc.add_row(&[1.0, -1.0], 2.0).unwrap();
        assert!(inc.solve(1e-12).unwrap());
        assert_eq!(inc.value(0), 1.0);
        inc.set_upper(0, 10.0);
        assert!(inc.solve(1e-12).unwrap());
        assert!((inc.value(0) - 10.0).abs() < 1e-12);
        assert!((inc.value(1) - 8.0).abs() < 1e-12);
        inc.add_row(&[0.0, 1.0], -1.0).unwrap();
        assert!(!inc.solve(1e-12).unwrap());
    }
}
