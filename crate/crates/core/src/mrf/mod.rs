//! Discrete energy minimization: max-flow/min-cut, alpha-expansion for
//! multi-label MRFs, and exact dynamic programming for chains.

mod chain;
mod expansion;
mod flow;

pub use chain::{chain_solve, ChainProblem, ChainSolution};
pub use expansion::{
    alpha_expand, ExpansionResult, MultiLabelProblem, PairCost, PairwiseEdge, DEFAULT_MAX_SWEEPS,
};
pub use flow::{max_flow, Arc, FlowGraph, MinCut};

/// Cost sentinel for forbidden assignments.
pub const INF: f64 = 1e30;

/// Addition that saturates at [`INF`].
#[inline]
pub fn sat_add(a: f64, b: f64) -> f64 {
    if a >= INF || b >= INF {
        INF
    } else {
        (a + b).min(INF)
    }
}
