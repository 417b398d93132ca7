//! DC power flow: angle/flow relations and the flow part of the relaxed
//! problem in nodal mode.
//!
//! The flow subproblem is solved in flow space. A spanning tree rooted at
//! the reference bus turns every non-tree line into one loop equation
//! (the reactance-weighted flows around a cycle sum to zero), which is
//! exactly the condition for flows to derive from bus angles. Angles are then
//! recovered by walking the tree from the reference bus.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::case::NetworkModel;
use crate::lp::{self, LinearProgram, LpError, LpStatus, Relation};

/// Bus angles and line flows of every hour.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowState {
    /// `theta[t][n]` in radians.
    pub theta: Vec<Vec<f64>>,
    /// `f[t][l]` in MW.
    pub f: Vec<Vec<f64>>,
}

/// Angles and flows of a single hour.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSlice {
    pub theta: Vec<f64>,
    pub f: Vec<f64>,
    /// `sum_l (lambda_s(l) - lambda_r(l)) * f_l`.
    pub value: f64,
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("price column has {got} entries, network has {expected} buses")]
    Dimension { expected: usize, got: usize },
    #[error("flow subproblem is unbounded; a line lacks finite limits")]
    Unbounded,
    #[error("flow subproblem is infeasible")]
    Infeasible,
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Structures derived once from a validated network.
#[derive(Debug)]
pub struct Topology {
    /// Buses in breadth-first order from the reference bus.
    order: Vec<usize>,
    /// `(parent bus, line)` of every non-reference bus in the spanning tree.
    parent: Vec<Option<(usize, usize)>>,
    /// Loop equations over line flows, sparse `(line, coefficient)`.
    cycles: Vec<Vec<(usize, f64)>>,
    /// Line flow per unit of net injection at each bus, withdrawn at the
    /// reference bus. `ptdf[l][n]`.
    ptdf: Vec<Vec<f64>>,
    /// Bus angle per unit of net injection, `angle[n][m]`.
    angle: Vec<Vec<f64>>,
}

impl Topology {
    pub(crate) fn build(net: &NetworkModel) -> Topology {
        let n = net.bus_count;
        let root = net.reference_index();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (idx, l) in net.lines.iter().enumerate() {
            adj[l.from - 1].push((l.to - 1, idx));
            adj[l.to - 1].push((l.from - 1, idx));
        }

        let mut parent = vec![None; n];
        let mut seen = vec![false; n];
        let mut tree_line = vec![false; net.lines.len()];
        let mut order = Vec::with_capacity(n);
        let mut queue = VecDeque::from([root]);
        seen[root] = true;
        while let Some(b) = queue.pop_front() {
            order.push(b);
            for &(c, line) in &adj[b] {
                if !seen[c] {
                    seen[c] = true;
                    parent[c] = Some((b, line));
                    tree_line[line] = true;
                    queue.push_back(c);
                }
            }
        }

        // theta_n - theta_root as a sparse combination of tree-line flows.
        let mut expr: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &b in order.iter().skip(1) {
            let (p, line) = parent[b].expect("non-root bus has a parent");
            let l = &net.lines[line];
            // from == p: theta_p - theta_b = X f, so theta_b = theta_p - X f.
            let coef = if l.from - 1 == p { -l.reactance } else { l.reactance };
            let mut e = expr[p].clone();
            e.push((line, coef));
            expr[b] = e;
        }

        let mut cycles = Vec::new();
        for (idx, l) in net.lines.iter().enumerate() {
            if tree_line[idx] {
                continue;
            }
            // theta_s - theta_r - X f = 0
            let mut row: Vec<(usize, f64)> = Vec::new();
            let mut add = |line: usize, c: f64| {
                if let Some(entry) = row.iter_mut().find(|e| e.0 == line) {
                    entry.1 += c;
                } else {
                    row.push((line, c));
                }
            };
            for &(line, c) in &expr[l.from - 1] {
                add(line, c);
            }
            for &(line, c) in &expr[l.to - 1] {
                add(line, -c);
            }
            add(idx, -l.reactance);
            row.retain(|e| e.1 != 0.0);
            cycles.push(row);
        }

        // Reduced susceptance matrix without the reference bus.
        let others: Vec<usize> = (0..n).filter(|&b| b != root).collect();
        let mut pos = vec![usize::MAX; n];
        for (k, &b) in others.iter().enumerate() {
            pos[b] = k;
        }
        let mut bmat = DMatrix::<f64>::zeros(n - 1, n - 1);
        for l in &net.lines {
            let (s, r, y) = (l.from - 1, l.to - 1, 1.0 / l.reactance);
            if s != root {
                bmat[(pos[s], pos[s])] += y;
            }
            if r != root {
                bmat[(pos[r], pos[r])] += y;
            }
            if s != root && r != root {
                bmat[(pos[s], pos[r])] -= y;
                bmat[(pos[r], pos[s])] -= y;
            }
        }
        let inv = bmat
            .lu()
            .try_inverse()
            .expect("susceptance matrix of a connected network is invertible");
        let mut angle = vec![vec![0.0; n]; n];
        for (a, &b) in others.iter().enumerate() {
            for (c, &m) in others.iter().enumerate() {
                angle[b][m] = inv[(a, c)];
            }
        }
        let ptdf = net
            .lines
            .iter()
            .map(|l| {
                (0..n)
                    .map(|m| (angle[l.from - 1][m] - angle[l.to - 1][m]) / l.reactance)
                    .collect()
            })
            .collect();

        Topology {
            order,
            parent,
            cycles,
            ptdf,
            angle,
        }
    }

    /// Line flow sensitivities to bus injections.
    pub fn ptdf(&self) -> &[Vec<f64>] {
        &self.ptdf
    }

    /// Number of independent loop equations.
    pub fn cycle_count(&self) -> usize {
        self.cycles.len()
    }

    /// Angles for a balanced vector of net injections (MW).
    pub fn angles_for_injections(&self, injection: &[f64]) -> Vec<f64> {
        self.angle
            .iter()
            .map(|row| row.iter().zip(injection).map(|(a, p)| a * p).sum())
            .collect()
    }

    fn angles_from_tree_flows(&self, net: &NetworkModel, f: &[f64]) -> Vec<f64> {
        let mut theta = vec![0.0; net.bus_count];
        for &b in self.order.iter().skip(1) {
            let (p, line) = self.parent[b].expect("non-root bus has a parent");
            let l = &net.lines[line];
            theta[b] = if l.from - 1 == p {
                theta[p] - l.reactance * f[line]
            } else {
                theta[p] + l.reactance * f[line]
            };
        }
        theta
    }
}

/// Line flows implied by bus angles: `(theta_s - theta_r) / X`.
pub fn flow_of_angles(net: &NetworkModel, theta: &[f64]) -> Vec<f64> {
    net.lines
        .iter()
        .map(|l| (theta[l.from - 1] - theta[l.to - 1]) / l.reactance)
        .collect()
}

/// Minimize `sum_l (lambda_s(l) - lambda_r(l)) f_l` over DC-feasible flows
/// within line limits, for one hour's bus prices.
pub fn flow_best_response(net: &NetworkModel, prices: &[f64]) -> Result<FlowSlice, NetworkError> {
    if prices.len() != net.bus_count {
        return Err(NetworkError::Dimension {
            expected: net.bus_count,
            got: prices.len(),
        });
    }
    let topo = net.topology();
    let nl = net.lines.len();
    let objective: Vec<f64> = net
        .lines
        .iter()
        .map(|l| prices[l.from - 1] - prices[l.to - 1])
        .collect();
    let bounds = net.lines.iter().map(|l| (l.f_min, l.f_max)).collect();
    let mut lp = LinearProgram::new(objective.clone()).with_bounds(bounds);
    for cycle in &topo.cycles {
        let mut coeffs = vec![0.0; nl];
        for &(line, c) in cycle {
            coeffs[line] = c;
        }
        lp.push(coeffs, Relation::Eq, 0.0);
    }
    let out = lp::solve_lp(&lp)?;
    match out.status {
        LpStatus::Optimal => {}
        LpStatus::Unbounded => return Err(NetworkError::Unbounded),
        LpStatus::Infeasible => return Err(NetworkError::Infeasible),
    }
    let theta = topo.angles_from_tree_flows(net, &out.x);
    let f = flow_of_angles(net, &theta);
    let value = objective.iter().zip(&f).map(|(c, v)| c * v).sum();
    Ok(FlowSlice { theta, f, value })
}
