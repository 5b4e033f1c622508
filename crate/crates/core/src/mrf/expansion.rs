//! Multi-label MRF energies and alpha-expansion.

use std::sync::Arc;

use super::flow::{max_flow, FlowGraph};
use super::{sat_add, INF};
use crate::error::{Error, Result};

/// Label-pair cost shared by one or more edges.
#[derive(Clone, Debug)]
pub enum PairCost {
    /// 0 when labels agree, 1 otherwise.
    Potts,
    /// Dense `num_labels x num_labels` table, row = label of `i`, column = label of `j`.
    Table(Arc<[f64]>),
}

#[derive(Clone, Debug)]
pub struct PairwiseEdge {
    pub i: usize,
    pub j: usize,
    pub cost: PairCost,
    pub weight: f64,
}

/// Pairwise MRF over `num_nodes` nodes with a shared label set.
///
/// A label is admissible for a node when its mask entry is set and its
/// unary cost is below [`INF`].
#[derive(Clone, Debug)]
pub struct MultiLabelProblem {
    num_nodes: usize,
    num_labels: usize,
    unary: Vec<f64>,
    admissible: Vec<bool>,
    edges: Vec<PairwiseEdge>,
}

impl MultiLabelProblem {
    pub fn new(num_nodes: usize, num_labels: usize) -> Self {
        Self {
            num_nodes,
            num_labels,
            unary: vec![0.0; num_nodes * num_labels],
            admissible: vec![true; num_nodes * num_labels],
            edges: Vec::new(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn edges(&self) -> &[PairwiseEdge] {
        &self.edges
    }

    pub fn set_unary(&mut self, node: usize, label: usize, cost: f64) {
        debug_assert!(cost >= 0.0, "unary costs must be non-negative");
        self.unary[node * self.num_labels + label] = cost.min(INF);
    }

    pub fn set_admissible(&mut self, node: usize, label: usize, admissible: bool) {
        self.admissible[node * self.num_labels + label] = admissible;
    }

    pub fn is_admissible(&self, node: usize, label: usize) -> bool {
        let k = node * self.num_labels + label;
        self.admissible[k] && self.unary[k] < INF
    }

    /// Effective unary cost: [`INF`] for inadmissible labels.
    pub fn unary(&self, node: usize, label: usize) -> f64 {
        let k = node * self.num_labels + label;
        if self.admissible[k] {
            self.unary[k]
        } else {
            INF
        }
    }

    pub fn add_edge(&mut self, i: usize, j: usize, cost: PairCost, weight: f64) {
        assert!(i < self.num_nodes && j < self.num_nodes && i != j);
        if let PairCost::Table(t) = &cost {
            assert_eq!(t.len(), self.num_labels * self.num_labels, "pair table size");
        }
        debug_assert!(weight >= 0.0);
        self.edges.push(PairwiseEdge { i, j, cost, weight });
    }

    pub fn pair_cost(&self, edge: &PairwiseEdge, li: usize, lj: usize) -> f64 {
        let base = match &edge.cost {
            PairCost::Potts => {
                if li == lj {
                    0.0
                } else {
                    1.0
                }
            }
            PairCost::Table(t) => t[li * self.num_labels + lj],
        };
        if base >= INF {
            INF
        } else {
            (edge.weight * base).min(INF)
        }
    }

    /// Saturating total energy of a labeling.
    pub fn energy(&self, labeling: &[usize]) -> f64 {
        let mut e = 0.0;
        for (node, &l) in labeling.iter().enumerate() {
            e = sat_add(e, self.unary(node, l));
        }
        for edge in &self.edges {
            e = sat_add(e, self.pair_cost(edge, labeling[edge.i], labeling[edge.j]));
        }
        e
    }

    /// Errors if some node has no admissible label.
    pub fn check_feasible(&self) -> Result<()> {
        for node in 0..self.num_nodes {
            if !(0..self.num_labels).any(|l| self.is_admissible(node, l)) {
                return Err(Error::Infeasible(format!("node {node} has no admissible label")));
            }
        }
        Ok(())
    }

    /// Cheapest admissible label per node, ties to the lowest index.
    pub fn unary_argmin(&self) -> Vec<usize> {
        (0..self.num_nodes)
            .map(|node| {
                let mut best = 0;
                for l in 1..self.num_labels {
                    if self.unary(node, l) < self.unary(node, best) {
                        best = l;
                    }
                }
                best
            })
            .collect()
    }

    /// Whether every edge's cost is symmetric, zero on the diagonal and
    /// satisfies the triangle inequality.
    pub fn is_metric(&self) -> bool {
        let l = self.num_labels;
        self.edges.iter().all(|edge| {
            let v = |a, b| self.pair_cost(edge, a, b);
            (0..l).all(|a| {
                v(a, a) == 0.0
                    && (0..l).all(|b| {
                        v(a, b) == v(b, a)
                            && (0..l).all(|c| v(a, c) <= sat_add(v(a, b), v(b, c)) + 1e-12)
                    })
            })
        })
    }
}

#[derive(Clone, Debug)]
pub struct ExpansionResult {
    pub labeling: Vec<usize>,
    pub energy: f64,
    /// Energy of the (sanitized) initial labeling followed by the energy after
    /// every completed sweep.
    pub sweep_energies: Vec<f64>,
}

pub const DEFAULT_MAX_SWEEPS: usize = 10;

/// Alpha-expansion. Labels are visited in ascending order; sweeps stop when a
/// full pass makes no strict improvement or after `max_sweeps`.
///
/// Initial labels that are inadmissible are replaced by the cheapest
/// admissible label. A move is only accepted when it strictly lowers the
/// exact (saturating) energy, so non-submodular terms are handled by
/// truncation without ever increasing the energy.
pub fn alpha_expand(
    problem: &MultiLabelProblem,
    initial: &[usize],
    max_sweeps: usize,
) -> Result<ExpansionResult> {
    problem.check_feasible()?;
    if initial.len() != problem.num_nodes {
        return Err(Error::DimensionMismatch(format!(
            "initial labeling has {} entries for {} nodes",
            initial.len(),
            problem.num_nodes
        )));
    }
    let fallback = problem.unary_argmin();
    let mut labeling: Vec<usize> = initial
        .iter()
        .enumerate()
        .map(|(node, &l)| {
            if l < problem.num_labels && problem.is_admissible(node, l) {
                l
            } else {
                fallback[node]
            }
        })
        .collect();
    let mut energy = problem.energy(&labeling);
    let mut sweep_energies = vec![energy];

    for _ in 0..max_sweeps {
        let mut improved = false;
        for alpha in 0..problem.num_labels {
            if let Some(candidate) = expansion_move(problem, &labeling, alpha) {
                let e = problem.energy(&candidate);
                if e < energy {
                    labeling = candidate;
                    energy = e;
                    improved = true;
                }
            }
        }
        sweep_energies.push(energy);
        if !improved {
            break;
        }
    }

    Ok(ExpansionResult {
        labeling,
        energy,
        sweep_energies,
    })
}

/// Best labeling reachable from `labeling` by switching any subset of nodes
/// to `alpha`, according to the graph-representable part of the energy.
/// Returns `None` when no node can switch.
fn expansion_move(problem: &MultiLabelProblem, labeling: &[usize], alpha: usize) -> Option<Vec<usize>> {
    // Nodes already at alpha, or for which alpha is inadmissible, are fixed.
    let mut var = vec![usize::MAX; problem.num_nodes];
    let mut free = Vec::new();
    for node in 0..problem.num_nodes {
        if labeling[node] != alpha && problem.is_admissible(node, alpha) {
            var[node] = free.len();
            free.push(node);
        }
    }
    if free.is_empty() {
        return None;
    }

    // e0 = cost if the variable keeps its label, e1 = cost if it takes alpha.
    let mut e0 = vec![0.0; free.len()];
    let mut e1 = vec![0.0; free.len()];
    for (k, &node) in free.iter().enumerate() {
        e0[k] = problem.unary(node, labeling[node]);
        e1[k] = problem.unary(node, alpha);
    }
    let mut pairs = Vec::new();
    for edge in problem.edges() {
        let (vi, vj) = (var[edge.i], var[edge.j]);
        let (fi, fj) = (labeling[edge.i], labeling[edge.j]);
        match (vi != usize::MAX, vj != usize::MAX) {
            (true, true) => {
                let a = problem.pair_cost(edge, fi, fj);
                let b = problem.pair_cost(edge, fi, alpha);
                let c = problem.pair_cost(edge, alpha, fj);
                let d = problem.pair_cost(edge, alpha, alpha);
                // A + (C - A) x_i + (D - C) x_j + (B + C - A - D) (1 - x_i) x_j
                add_linear(&mut e0, &mut e1, vi, c - a);
                add_linear(&mut e0, &mut e1, vj, d - c);
                let w = b + c - a - d;
                if w > 0.0 {
                    pairs.push((vi, vj, w));
                }
            }
            (true, false) => {
                e0[vi] += problem.pair_cost(edge, fi, fj);
                e1[vi] += problem.pair_cost(edge, alpha, fj);
            }
            (false, true) => {
                e0[vj] += problem.pair_cost(edge, fi, fj);
                e1[vj] += problem.pair_cost(edge, fi, alpha);
            }
            (false, false) => {}
        }
    }

    // Source side = keep (x = 0), sink side = switch to alpha (x = 1).
    let mut graph = FlowGraph::new(free.len());
    for k in 0..free.len() {
        let m = e0[k].min(e1[k]);
        graph.add_terminal(k, (e1[k] - m).max(0.0), (e0[k] - m).max(0.0));
    }
    for (i, j, w) in pairs {
        graph.add_edge(i, j, w, 0.0);
    }
    let cut = max_flow(&graph);

    let mut next = labeling.to_vec();
    let mut changed = false;
    for (k, &node) in free.iter().enumerate() {
        if cut.sink_side[k] {
            next[node] = alpha;
            changed = true;
        }
    }
    changed.then_some(next)
}

// Adds v * x to a variable's binary unary (x = 1 means "switch").
fn add_linear(e0: &mut [f64], e1: &mut [f64], k: usize, v: f64) {
    if v >= 0.0 {
        e1[k] += v;
    } else {
        e0[k] -= v;
    }
}
